//! Closed-form evaluation of the reconstruction-error bounds and their
//! applicability conditions.
//!
//! The absolute constants in these bounds are not known numerically, so they are
//! configuration ([`BoundConstants`], all defaulting to 1). Conditions written
//! with `<=`/`>=` are evaluated inclusively.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectra::{EigenvalueProfile, SpectralModel, WeightedOperatorStats, GAP_TOLERANCE};

fn one() -> f64 {
    1.0
}

/// Absolute constants of the bounds. `c1 = c1p / 8` links the two families in
/// theory; both are exposed independently here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConstants {
    #[serde(default = "one")]
    pub c1: f64,
    #[serde(default = "one")]
    pub c2: f64,
    #[serde(rename = "C1", default = "one")]
    pub big_c1: f64,
    #[serde(default = "one")]
    pub c1p: f64,
    #[serde(default = "one")]
    pub c2p: f64,
    #[serde(rename = "C1p", default = "one")]
    pub big_c1p: f64,
    /// Davis–Kahan excess-risk constant.
    #[serde(rename = "C_dk", default = "one")]
    pub dk: f64,
    /// Hanson–Wright constant, used both as deviation offset and in the exponent.
    #[serde(rename = "C_hw", default = "one")]
    pub hw: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            big_c1: 1.0,
            c1p: 1.0,
            c2p: 1.0,
            big_c1p: 1.0,
            dk: 1.0,
            hw: 1.0,
        }
    }
}

impl BoundConstants {
    pub const NAMES: [&'static str; 8] = ["c1", "c2", "C1", "c1p", "c2p", "C1p", "C_dk", "C_hw"];

    fn values(&self) -> [f64; 8] {
        [
            self.c1,
            self.c2,
            self.big_c1,
            self.c1p,
            self.c2p,
            self.big_c1p,
            self.dk,
            self.hw,
        ]
    }

    pub fn violations(&self) -> Vec<Error> {
        Self::NAMES
            .iter()
            .zip(self.values())
            .filter(|(_, v)| !(v.is_finite() && *v > 0.0))
            .map(|(name, v)| Error::param(name, format!("constant must be positive, got {v}")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Largest `d' <= d` with `lambda_{d'} >= 2 lambda_{d+1}` and
/// `max(d', lambda_{d'}^{-1} sum_{k>d} lambda_k) <= c1 n`.
pub fn select_dprime<T: Scalar>(
    model: &SpectralModel<T>,
    d: usize,
    n: usize,
    constants: &BoundConstants,
) -> Result<Option<usize>> {
    let tail = model.tail_sum(d)?;
    if d == 0 {
        return Ok(None);
    }
    Ok((1..=d)
        .rev()
        .find(|&dp| dprime_conditions(model, dp, d, n, tail, constants.c1).0))
}

/// `(gap_ok && size_ok, gap_ok, size_ok)` for one candidate.
fn dprime_conditions<T: Scalar>(
    model: &SpectralModel<T>,
    d_prime: usize,
    d: usize,
    n: usize,
    tail_d: T,
    c1: f64,
) -> (bool, bool, bool) {
    let top = model.lambda(d_prime);
    let gap_ok = top >= T::lit(2.0) * model.lambda(d + 1);
    let budget = T::lit(c1) * T::from_usize_lossy(n);
    let size_ok = T::from_usize_lossy(d_prime).max(tail_d / top) <= budget;
    (gap_ok && size_ok, gap_ok, size_ok)
}

/// Choice `d' = d + 1 - k`, `k = ceil((alpha beta)^{-1} (d+1)^{1-beta} log(2 K^2))`,
/// used for near-exponential decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearExponentialChoice {
    pub k: i64,
    pub d_prime: i64,
    /// `k <= (d+1)/2`, the regime where the construction is used.
    pub in_regime: bool,
    /// `1 <= d' <= d`.
    pub valid: bool,
}

pub fn cor_ned_dprime(
    alpha: f64,
    beta: f64,
    k_const: f64,
    d: usize,
) -> Result<NearExponentialChoice> {
    if !(alpha > 0.0) {
        return Err(Error::param(
            "alpha",
            format!("must be positive, got {alpha}"),
        ));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param(
            "beta",
            format!("must lie in (0, 1], got {beta}"),
        ));
    }
    if !(k_const > 0.0) {
        return Err(Error::param(
            "K",
            format!("must be positive, got {k_const}"),
        ));
    }
    if d == 0 {
        return Err(Error::param("d", "must be at least 1"));
    }
    let dp1 = (d + 1) as f64;
    let raw = dp1.powf(1.0 - beta) * (2.0 * k_const * k_const).ln() / (alpha * beta);
    let k = raw.ceil() as i64;
    let d_prime = d as i64 + 1 - k;
    Ok(NearExponentialChoice {
        k,
        d_prime,
        in_regime: k >= 1 && 2 * k <= d as i64 + 1,
        valid: d_prime >= 1 && d_prime <= d as i64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Report<T> {
    /// `(1 + C1 (d'/n + t/n)) sum_{k>d'} lambda_k`
    pub bound: T,
    /// `sum_{k>d'} lambda_k`
    pub oracle: T,
    pub gap_ok: bool,
    pub size_ok: bool,
    /// `1 <= t <= c2 n`
    pub t_ok: bool,
}

impl<T: Scalar> Theorem1Report<T> {
    pub fn applies(&self) -> bool {
        self.gap_ok && self.size_ok && self.t_ok
    }
}

fn check_dims<T: Scalar>(
    model: &SpectralModel<T>,
    d_prime: usize,
    d: usize,
    n: usize,
) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", "sample size must be at least 1"));
    }
    if d_prime == 0 || d_prime > d {
        return Err(Error::Range {
            what: "d_prime",
            value: d_prime,
            allowed: format!("1..={d}"),
        });
    }
    if d > model.dim() {
        return Err(Error::Range {
            what: "d",
            value: d,
            allowed: format!("1..={}", model.dim()),
        });
    }
    Ok(())
}

pub fn theorem1_bound<T: Scalar>(
    model: &SpectralModel<T>,
    d_prime: usize,
    d: usize,
    n: usize,
    t: T,
    constants: &BoundConstants,
) -> Result<Theorem1Report<T>> {
    check_dims(model, d_prime, d, n)?;
    let nf = T::from_usize_lossy(n);
    let oracle = model.tail_sum(d_prime)?;
    let tail_d = model.tail_sum(d)?;
    let (_, gap_ok, size_ok) = dprime_conditions(model, d_prime, d, n, tail_d, constants.c1);
    let factor = T::one() + T::lit(constants.big_c1) * (T::from_usize_lossy(d_prime) / nf + t / nf);
    Ok(Theorem1Report {
        bound: factor * oracle,
        oracle,
        gap_ok,
        size_ok,
        t_ok: t >= T::one() && t <= T::lit(constants.c2) * nf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Report<T> {
    /// `(1 + C1' (op tr / n + op^2 t / n)) sum_{k>d'} lambda_k`
    pub bound: T,
    pub oracle: T,
    pub stats: WeightedOperatorStats<T>,
    /// `sum_{k>d} lambda_k / (lambda_{d'} - lambda_k)`
    pub resolvent_tail: T,
    /// `op tr + op * resolvent_tail`, compared against `c1' n`.
    pub assev_lhs: T,
    pub assev_ok: bool,
    /// `1 <= t <= c2' n / op^2`
    pub t_ok: bool,
}

impl<T: Scalar> Theorem2Report<T> {
    pub fn applies(&self) -> bool {
        self.assev_ok && self.t_ok
    }

    /// `1 + C1' (op tr / n + op^2 t / n)`
    pub fn prefactor(&self) -> T {
        self.bound / self.oracle
    }
}

pub fn theorem2_bound<T: Scalar>(
    model: &SpectralModel<T>,
    d_prime: usize,
    d: usize,
    n: usize,
    t: T,
    constants: &BoundConstants,
) -> Result<Theorem2Report<T>> {
    check_dims(model, d_prime, d, n)?;
    let stats = model.weighted_operator_stats(d_prime, d)?;
    let resolvent_tail = model.resolvent_tail_sum(d_prime, d)?;
    let nf = T::from_usize_lossy(n);
    let oracle = model.tail_sum(d_prime)?;
    let op = stats.op_norm;
    let factor = T::one() + T::lit(constants.big_c1p) * (op * stats.trace / nf + op * op * t / nf);
    let assev_lhs = op * stats.trace + op * resolvent_tail;
    Ok(Theorem2Report {
        bound: factor * oracle,
        oracle,
        stats,
        resolvent_tail,
        assev_lhs,
        assev_ok: assev_lhs <= T::lit(constants.c1p) * nf,
        t_ok: t >= T::one() && t <= T::lit(constants.c2p) * nf / (op * op),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DavisKahanReport<T> {
    /// `sum_{k>d} lambda_k`
    pub oracle: T,
    /// `C t / ((lambda_d - lambda_{d+1}) n)`
    pub excess: T,
    /// `oracle + excess`, on the same axis as the other bounds.
    pub bound: T,
}

pub fn davis_kahan_bound<T: Scalar>(
    model: &SpectralModel<T>,
    d: usize,
    n: usize,
    t: T,
    constants: &BoundConstants,
) -> Result<DavisKahanReport<T>> {
    check_dims(model, d.max(1), d, n)?;
    if d == 0 {
        return Err(Error::param("d", "must be at least 1"));
    }
    let (upper, lower) = (model.lambda(d), model.lambda(d + 1));
    let gap = upper - lower;
    if gap <= T::rel_tol(GAP_TOLERANCE) * upper {
        return Err(Error::DegenerateGap {
            upper: d,
            lower: d + 1,
            lambda_upper: upper.as_f64(),
            lambda_lower: lower.as_f64(),
        });
    }
    let oracle = model.tail_sum(d)?;
    let excess = T::lit(constants.dk) * t / (gap * T::from_usize_lossy(n));
    Ok(DavisKahanReport {
        oracle,
        excess,
        bound: oracle + excess,
    })
}

/// Norm constants of the operator-valued quadratic form in the Hanson–Wright
/// step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HansonWrightTerms<T> {
    pub u1: T,
    pub u2: T,
    pub v: T,
    /// `u1 + u2`
    pub u: T,
}

pub fn hanson_wright_terms<T: Scalar>(
    model: &SpectralModel<T>,
    d_prime: usize,
    d: usize,
    n: usize,
) -> Result<HansonWrightTerms<T>> {
    check_dims(model, d_prime, d, n)?;
    let stats = model.weighted_operator_stats(d_prime, d)?;
    let nf = T::from_usize_lossy(n);
    let two = T::lit(2.0);
    let next = model.lambda(d_prime + 1);
    let tail = model.tail_sum(d_prime)?;
    let u1 = (stats.trace * next).max(stats.op_norm * tail).sqrt() / (two * nf);
    let u2 = (stats.op_norm * next).sqrt() / (two * nf).sqrt();
    let v = (stats.op_norm * next).sqrt() / (two.sqrt() * nf);
    Ok(HansonWrightTerms {
        u1,
        u2,
        v,
        u: u1 + u2,
    })
}

/// One instance of the deviation inequality for `sqrt(cross_hs_sq)`:
/// `P(sqrt(cross) >= s + C sqrt(tr * tail / n)) <= 2 exp(-min(s^2/U^2, s/V) / C)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HansonWrightTail<T> {
    /// `s + C sqrt(tr(Sigma_{d'}) sum_{k>d'} lambda_k / n)`
    pub threshold: T,
    /// Right-hand side, capped at 1.
    pub probability: T,
}

pub fn hanson_wright_tail<T: Scalar>(
    model: &SpectralModel<T>,
    d_prime: usize,
    d: usize,
    n: usize,
    s: T,
    c_hw: f64,
) -> Result<HansonWrightTail<T>> {
    if !(s > T::zero()) {
        return Err(Error::param("s", "deviation level must be positive"));
    }
    let terms = hanson_wright_terms(model, d_prime, d, n)?;
    let stats = model.weighted_operator_stats(d_prime, d)?;
    let c = T::lit(c_hw);
    let nf = T::from_usize_lossy(n);
    let offset = c * (stats.trace * model.tail_sum(d_prime)? / nf).sqrt();
    let rate = if terms.u > T::zero() {
        (s * s / (terms.u * terms.u)).min(s / terms.v)
    } else {
        T::infinity()
    };
    Ok(HansonWrightTail {
        threshold: s + offset,
        probability: (T::lit(2.0) * (-rate / c).exp()).min(T::one()),
    })
}

/// Decay-rate envelope: `C1 d^{1-alpha}` (polynomial) or
/// `C1 d^{1-beta} exp(-alpha (d+1)^beta)` (exponential).
pub fn corollary_rate<T: Scalar>(
    profile: &EigenvalueProfile<T>,
    d: usize,
    constants: &BoundConstants,
) -> Result<T> {
    if d == 0 {
        return Err(Error::param("d", "must be at least 1"));
    }
    let c = T::lit(constants.big_c1);
    let df = T::from_usize_lossy(d);
    match profile {
        EigenvalueProfile::Polynomial { alpha, .. } => Ok(c * df.powf(T::one() - *alpha)),
        EigenvalueProfile::Exponential { alpha, beta, .. } => {
            let dp1 = T::from_usize_lossy(d + 1);
            Ok(c * df.powf(T::one() - *beta) * (-*alpha * dp1.powf(*beta)).exp())
        }
        EigenvalueProfile::Explicit { .. } => Err(Error::UnsupportedProfile(profile.describe())),
    }
}

/// `sum_{k>d} lambda_k / (d^{1-beta} exp(-alpha d^beta))` for an exponential
/// profile: the tail measured against its own decay envelope.
pub fn tail_envelope_ratio<T: Scalar>(model: &SpectralModel<T>, d: usize) -> Result<T> {
    match model.profile() {
        EigenvalueProfile::Exponential { alpha, beta, .. } => {
            if d == 0 {
                return Err(Error::param("d", "must be at least 1"));
            }
            let df = T::from_usize_lossy(d);
            let env = df.powf(T::one() - *beta) * (-*alpha * df.powf(*beta)).exp();
            Ok(model.tail_sum(d)? / env)
        }
        other => Err(Error::UnsupportedProfile(other.describe())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEnvelope {
    /// `K^{-2} exp(alpha beta (d+1)^{beta-1} k)`
    pub lower: f64,
    /// `K^2 exp(2^{1-beta} alpha beta (d+1)^{beta-1} k)`
    pub upper: f64,
    /// `1 <= k <= (d+1)/2`
    pub in_regime: bool,
}

/// Bracket for `lambda_{d'} / lambda_{d+1}` with `d' = d + 1 - k`.
pub fn eigenvalue_ratio_envelope(
    alpha: f64,
    beta: f64,
    k_const: f64,
    d: usize,
    k: usize,
) -> RatioEnvelope {
    let base = alpha * beta * ((d + 1) as f64).powf(beta - 1.0) * k as f64;
    let k2 = k_const * k_const;
    RatioEnvelope {
        lower: base.exp() / k2,
        upper: k2 * (2f64.powf(1.0 - beta) * base).exp(),
        in_regime: k >= 1 && 2 * k <= d + 1,
    }
}

/// Actual ratio `lambda_{d+1-k} / lambda_{d+1}` of an exponential-profile model and
/// whether it lies within [`eigenvalue_ratio_envelope`].
pub fn check_ratio_envelope<T: Scalar>(
    model: &SpectralModel<T>,
    d: usize,
    k: usize,
) -> Result<(f64, RatioEnvelope, bool)> {
    let EigenvalueProfile::Exponential { k: kc, alpha, beta } = model.profile() else {
        return Err(Error::UnsupportedProfile(model.profile().describe()));
    };
    let env = eigenvalue_ratio_envelope(alpha.as_f64(), beta.as_f64(), kc.as_f64(), d, k);
    if !env.in_regime || d + 1 > model.dim() {
        return Err(Error::Range {
            what: "k",
            value: k,
            allowed: format!("1..={} with d + 1 <= D", (d + 1) / 2),
        });
    }
    let ratio = (model.lambda(d + 1 - k) / model.lambda(d + 1)).as_f64();
    // relative slack for the beta = 1 equality case
    let slack = 1e-12;
    let inside = ratio >= env.lower * (1.0 - slack) && ratio <= env.upper * (1.0 + slack);
    Ok((ratio, env, inside))
}

/// Every bound quantity for one `(d', d, n, t)` tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<T> {
    pub d_prime: usize,
    pub d: usize,
    pub n: usize,
    pub t: T,
    pub gap_ok: bool,
    pub size_ok: bool,
    pub assev_ok: bool,
    /// Admissible `t` for the first bound: `1 <= t <= c2 n`.
    pub t_ok: bool,
    /// Admissible `t` for the weighted bound: `1 <= t <= c2' n / op^2`.
    pub t_ok_thm2: bool,
    pub oracle: T,
    pub oracle_d: T,
    pub thm1_bound: T,
    /// `None` when the weighted operator is undefined (no gap at `(d', d)`).
    pub thm2_bound: Option<T>,
    pub dk_bound: Option<T>,
    pub op_norm: Option<T>,
    pub trace: Option<T>,
    pub hs_norm_sq: Option<T>,
    pub resolvent_tail: Option<T>,
    pub hw: Option<HansonWrightTerms<T>>,
}

impl<T: Scalar> BoundReport<T> {
    /// Column names of [`BoundReport::csv_fields`], in order.
    pub const CSV_HEADER: [&'static str; 24] = [
        "d_prime",
        "d",
        "n",
        "t",
        "gap_ok",
        "size_ok",
        "assev_ok",
        "t_ok",
        "t_ok_thm2",
        "oracle_dprime",
        "oracle_d",
        "thm1_bound",
        "thm2_bound",
        "dk_bound",
        "op_norm",
        "trace",
        "hs_norm_sq",
        "resolvent_tail",
        "hw_u1",
        "hw_u2",
        "hw_v",
        "hw_u",
        "thm1_ratio",
        "thm2_ratio",
    ];

    pub fn csv_fields(&self) -> Vec<String> {
        let f = |x: T| format!("{:.16e}", x.as_f64());
        let o = |x: Option<T>| x.map_or_else(String::new, f);
        let b = |x: bool| if x { "1" } else { "0" }.to_string();
        vec![
            self.d_prime.to_string(),
            self.d.to_string(),
            self.n.to_string(),
            f(self.t),
            b(self.gap_ok),
            b(self.size_ok),
            b(self.assev_ok),
            b(self.t_ok),
            b(self.t_ok_thm2),
            f(self.oracle),
            f(self.oracle_d),
            f(self.thm1_bound),
            o(self.thm2_bound),
            o(self.dk_bound),
            o(self.op_norm),
            o(self.trace),
            o(self.hs_norm_sq),
            o(self.resolvent_tail),
            o(self.hw.map(|h| h.u1)),
            o(self.hw.map(|h| h.u2)),
            o(self.hw.map(|h| h.v)),
            o(self.hw.map(|h| h.u)),
            f(self.thm1_bound / self.oracle),
            o(self.thm2_bound.map(|b| b / self.oracle)),
        ]
    }
}

pub fn bound_report<T: Scalar>(
    model: &SpectralModel<T>,
    d_prime: usize,
    d: usize,
    n: usize,
    t: T,
    constants: &BoundConstants,
) -> Result<BoundReport<T>> {
    let thm1 = theorem1_bound(model, d_prime, d, n, t, constants)?;
    let thm2 = match theorem2_bound(model, d_prime, d, n, t, constants) {
        Ok(r) => Some(r),
        Err(Error::DegenerateGap { .. }) => None,
        Err(e) => return Err(e),
    };
    let dk = match davis_kahan_bound(model, d, n, t, constants) {
        Ok(r) => Some(r.bound),
        Err(Error::DegenerateGap { .. }) => None,
        Err(e) => return Err(e),
    };
    let hw = thm2.and_then(|_| hanson_wright_terms(model, d_prime, d, n).ok());
    Ok(BoundReport {
        d_prime,
        d,
        n,
        t,
        gap_ok: thm1.gap_ok,
        size_ok: thm1.size_ok,
        assev_ok: thm2.is_some_and(|r| r.assev_ok),
        t_ok: thm1.t_ok,
        t_ok_thm2: thm2.is_some_and(|r| r.t_ok),
        oracle: thm1.oracle,
        oracle_d: model.tail_sum(d)?,
        thm1_bound: thm1.bound,
        thm2_bound: thm2.map(|r| r.bound),
        dk_bound: dk,
        op_norm: thm2.map(|r| r.stats.op_norm),
        trace: thm2.map(|r| r.stats.trace),
        hs_norm_sq: thm2.map(|r| r.stats.hs_norm_sq),
        resolvent_tail: thm2.map(|r| r.resolvent_tail),
        hw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exact powers of two, so boundary equalities hold bit for bit.
    fn geometric(dim: usize) -> SpectralModel<f64> {
        SpectralModel::from_values((1..=dim as i32).map(|j| 0.5f64.powi(j)).collect()).unwrap()
    }

    fn e_decay(dim: usize) -> SpectralModel<f64> {
        SpectralModel::materialize(EigenvalueProfile::exponential(1.0, 1.0, 1.0), dim).unwrap()
    }

    fn brute_force_dprime(m: &SpectralModel<f64>, d: usize, n: usize, c1: f64) -> Option<usize> {
        let tail: f64 = m.eigenvalues()[d..].iter().sum();
        let mut best = None;
        for dp in 1..=d {
            let l = m.eigenvalues()[dp - 1];
            let next = m.eigenvalues().get(d).copied().unwrap_or(0.0);
            if l >= 2.0 * next && (dp as f64).max(tail / l) <= c1 * n as f64 {
                best = Some(dp);
            }
        }
        best
    }

    #[test]
    fn select_dprime_examples() {
        let m = geometric(20);
        let consts = BoundConstants::default();
        // lambda_3 = 2 lambda_4 exactly: the boundary is accepted
        assert_eq!(select_dprime(&m, 3, 10_000, &consts).unwrap(), Some(3));
        let flat = SpectralModel::from_values(vec![1.0, 0.99, 0.98, 0.97]).unwrap();
        assert_eq!(select_dprime(&flat, 2, 10_000, &consts).unwrap(), None);
        let poly =
            SpectralModel::materialize(EigenvalueProfile::polynomial(1.0, 2.0), 1000).unwrap();
        let got = select_dprime(&poly, 8, 10_000, &consts).unwrap();
        assert_eq!(got, brute_force_dprime(&poly, 8, 10_000, 1.0));
        assert_eq!(got, Some(6));
    }

    #[test]
    fn select_dprime_respects_sample_budget() {
        let m = geometric(20);
        let consts = BoundConstants {
            c1: 0.01,
            ..Default::default()
        };
        // c1 n = 2: only d' <= 2 qualifies
        assert_eq!(select_dprime(&m, 5, 200, &consts).unwrap(), Some(2));
        assert_eq!(select_dprime(&m, 5, 50, &consts).unwrap(), None);
    }

    #[test]
    fn near_exponential_choice_examples() {
        let c = cor_ned_dprime(std::f64::consts::LN_2, 1.0, 1.0, 10).unwrap();
        assert_eq!((c.k, c.d_prime), (1, 10));
        assert!(c.in_regime && c.valid);
        let c = cor_ned_dprime(1.0, 0.5, 1.0, 99).unwrap();
        assert_eq!((c.k, c.d_prime), (14, 86));
        for d in [10usize, 100, 1000] {
            let (alpha, beta) = (0.7, 0.3);
            let c = cor_ned_dprime(alpha, beta, 1.0, d).unwrap();
            let direct =
                (((d + 1) as f64).powf(1.0 - beta) * 2f64.ln() / (alpha * beta)).ceil() as i64;
            assert_eq!(c.k, direct);
            assert_eq!(c.d_prime, d as i64 + 1 - direct);
        }
        let c = cor_ned_dprime(0.01, 0.5, 1.0, 4).unwrap();
        assert!(!c.in_regime && !c.valid);
        assert!(cor_ned_dprime(1.0, 1.5, 1.0, 4).is_err());
    }

    #[test]
    fn theorem1_examples() {
        let m = SpectralModel::from_values(vec![1.0f64, 0.5, 0.15, 0.1]).unwrap();
        // tail(2) = 0.25
        let r = theorem1_bound(&m, 2, 2, 100, 4.0, &BoundConstants::default()).unwrap();
        assert!((r.oracle - 0.25).abs() < 1e-15);
        assert!((r.bound - 0.265).abs() < 1e-14);

        let g = geometric(20);
        let r = theorem1_bound(&g, 2, 2, 100, 1.0, &BoundConstants::default()).unwrap();
        assert!(r.gap_ok);
        let tight = BoundConstants {
            c1: 0.02,
            ..Default::default()
        };
        assert!(theorem1_bound(&g, 2, 2, 100, 1.0, &tight).unwrap().size_ok);
        let too_tight = BoundConstants {
            c1: 0.019,
            ..Default::default()
        };
        assert!(
            !theorem1_bound(&g, 2, 2, 100, 1.0, &too_tight)
                .unwrap()
                .size_ok
        );
        assert!(!theorem1_bound(&g, 2, 2, 100, 0.5, &tight).unwrap().t_ok);
        assert!(!theorem1_bound(&g, 2, 2, 100, 101.0, &tight).unwrap().t_ok);

        // ratio -> 1 as t and d'/n vanish
        let r = theorem1_bound(&g, 2, 2, 1_000_000_000, 1e-9, &BoundConstants::default()).unwrap();
        assert!((r.bound / r.oracle - 1.0).abs() < 1e-8);
    }

    #[test]
    fn theorem2_example() {
        let g = geometric(20);
        let r = theorem2_bound(&g, 2, 2, 100, 1.0, &BoundConstants::default()).unwrap();
        let tail = 0.25 - 2f64.powi(-20);
        let want = (1.0 + (2.0 * 10.0 / 3.0 + 4.0) / 100.0) * tail;
        assert!((r.bound - want).abs() < 1e-14);
        assert!((r.bound - 0.27666).abs() < 1e-5);
        // eigenvalue-condition left side with the 18-term resolvent tail
        let res: f64 = (1..=18).rev().map(|m| 1.0 / (2f64.powi(m) - 1.0)).sum();
        assert!((r.assev_lhs - (20.0 / 3.0 + 2.0 * res)).abs() < 1e-13);
        assert!((r.assev_lhs - 9.880).abs() < 1e-3);
        let c = BoundConstants {
            c1p: 0.1,
            ..Default::default()
        };
        assert!(theorem2_bound(&g, 2, 2, 99, 1.0, &c).unwrap().assev_ok == (9.9 >= r.assev_lhs));
        assert!(!theorem2_bound(&g, 2, 2, 98, 1.0, &c).unwrap().assev_ok);
        assert!(theorem2_bound(&g, 2, 2, 99, 1.0, &c).unwrap().assev_ok);
        // t range: 1 <= t <= c2' n / op^2 = 25
        assert!(theorem2_bound(&g, 2, 2, 100, 25.0, &c).unwrap().t_ok);
        assert!(!theorem2_bound(&g, 2, 2, 100, 25.5, &c).unwrap().t_ok);
    }

    #[test]
    fn theorem2_collapses_to_theorem1_without_tail() {
        let m = SpectralModel::from_values(vec![1.0f64, 0.6, 0.3]).unwrap();
        let c = BoundConstants {
            big_c1: 1.7,
            big_c1p: 1.7,
            ..Default::default()
        };
        for dp in 1..=3 {
            for t in [1.0, 3.0] {
                let a = theorem1_bound(&m, dp, 3, 40, t, &c).unwrap();
                let b = theorem2_bound(&m, dp, 3, 40, t, &c).unwrap();
                assert!((a.bound - b.bound).abs() < 1e-15);
                assert_eq!(b.stats.op_norm, 1.0);
            }
        }
    }

    #[test]
    fn davis_kahan_examples() {
        let m = e_decay(60);
        let c = BoundConstants::default();
        let r = davis_kahan_bound(&m, 2, 1000, 1.0, &c).unwrap();
        let e = std::f64::consts::E;
        let want = e * e / ((1.0 - 1.0 / e) * 1000.0);
        assert!((r.excess - want).abs() < 1e-15);
        assert!((r.excess - 0.0116893).abs() < 1e-7);
        assert!((r.bound - r.oracle - r.excess).abs() < 1e-15);
        let r2 = davis_kahan_bound(&m, 2, 2000, 1.0, &c).unwrap();
        assert_eq!(r2.excess * 2.0, r.excess);
        let crossing = (1..30)
            .find(|&d| {
                let r = davis_kahan_bound(&m, d, 1000, 1.0, &c).unwrap();
                r.excess > r.oracle
            })
            .unwrap();
        assert_eq!(crossing, 3);
        let flat = SpectralModel::from_values(vec![1.0, 0.5, 0.5]).unwrap();
        assert!(matches!(
            davis_kahan_bound(&flat, 2, 10, 1.0, &c),
            Err(Error::DegenerateGap { .. })
        ));
    }

    #[test]
    fn hanson_wright_example() {
        let g = geometric(20);
        let h = hanson_wright_terms(&g, 2, 2, 100).unwrap();
        let tail = 0.25 - 2f64.powi(-20);
        let u1 = (10.0f64 / 3.0 * 0.125).max(2.0 * tail).sqrt() / 200.0;
        assert!((h.u1 - u1).abs() < 1e-15);
        assert!((h.u1 - 0.0035355).abs() < 1e-7);
        assert!((h.u2 - 0.25f64.sqrt() / 200f64.sqrt()).abs() < 1e-15);
        assert!((h.u2 - 0.035355).abs() < 1e-6);
        assert!((h.v - 0.5 / (2f64.sqrt() * 100.0)).abs() < 1e-15);
        assert!((h.u - h.u1 - h.u2).abs() < 1e-15);
        let h4 = hanson_wright_terms(&g, 2, 2, 400).unwrap();
        assert!((h4.u1 * 4.0 - h.u1).abs() < 1e-15);
        assert!((h4.v * 4.0 - h.v).abs() < 1e-15);
        assert!((h4.u2 * 2.0 - h.u2).abs() < 1e-15);
    }

    #[test]
    fn hanson_wright_tail_is_a_probability() {
        let g = geometric(20);
        let small = hanson_wright_tail(&g, 2, 2, 50, 1e-6, 1.0).unwrap();
        assert_eq!(small.probability, 1.0);
        let large = hanson_wright_tail(&g, 2, 2, 50, 1.0, 1.0).unwrap();
        assert!(large.probability < 1e-10);
        assert!(large.threshold > 1.0);
        assert!(hanson_wright_tail(&g, 2, 2, 50, 0.0, 1.0).is_err());
    }

    #[test]
    fn corollary_rates() {
        let c = BoundConstants::default();
        let p = EigenvalueProfile::polynomial(1.0f64, 2.0);
        assert!((corollary_rate(&p, 10, &c).unwrap() - 0.1).abs() < 1e-15);
        let e = EigenvalueProfile::exponential(1.0, std::f64::consts::LN_2, 1.0);
        assert!((corollary_rate(&e, 3, &c).unwrap() - 0.0625).abs() < 1e-15);
        assert!(matches!(
            corollary_rate(&EigenvalueProfile::explicit(vec![1.0]), 1, &c),
            Err(Error::UnsupportedProfile(_))
        ));
    }

    #[test]
    fn ratio_envelope_examples() {
        let env = eigenvalue_ratio_envelope(0.8, 1.0, 1.0, 20, 3);
        assert!((env.lower - env.upper).abs() < 1e-12);
        assert!((env.lower - (2.4f64).exp()).abs() < 1e-12);
        let m =
            SpectralModel::materialize(EigenvalueProfile::exponential(1.0, 0.8, 1.0), 40).unwrap();
        assert!(check_ratio_envelope(&m, 20, 3).unwrap().2);

        let env = eigenvalue_ratio_envelope(1.0, 0.5, 1.0, 99, 5);
        assert!((env.lower - 0.25f64.exp()).abs() < 1e-14);
        assert!((env.upper - (2f64.sqrt() * 0.25).exp()).abs() < 1e-14);
        let m =
            SpectralModel::materialize(EigenvalueProfile::exponential(1.0, 1.0, 0.5), 200).unwrap();
        let (ratio, _, inside) = check_ratio_envelope(&m, 99, 5).unwrap();
        assert!(inside);
        assert!((ratio - (10.0 - 95f64.sqrt()).exp()).abs() < 1e-12);

        let wide = eigenvalue_ratio_envelope(1.0, 0.5, 2.0, 99, 5);
        assert!((wide.lower * 4.0 - env.lower).abs() < 1e-14);
        assert!((wide.upper / 4.0 - env.upper).abs() < 1e-14);
        assert!(!eigenvalue_ratio_envelope(1.0, 0.5, 1.0, 9, 6).in_regime);
    }

    #[test]
    fn bound_report_row_is_complete() {
        let g = geometric(20);
        let r = bound_report(&g, 2, 2, 100, 1.0, &BoundConstants::default()).unwrap();
        let fields = r.csv_fields();
        assert_eq!(fields.len(), BoundReport::<f64>::CSV_HEADER.len());
        assert!((r.thm2_bound.unwrap() - 0.27666).abs() < 1e-5);
        assert!(fields.iter().all(|f| !f.is_empty()));
        let flat = SpectralModel::from_values(vec![1.0, 0.5, 0.5, 0.2]).unwrap();
        let r = bound_report(&flat, 2, 2, 100, 1.0, &BoundConstants::default()).unwrap();
        assert!(r.thm2_bound.is_none() && r.dk_bound.is_none());
    }

    fn explicit_model() -> impl Strategy<Value = SpectralModel<f64>> {
        prop::collection::vec(0.05f64..1.0, 2..50).prop_map(|v| {
            let mut acc = 1.0;
            let vals = v
                .iter()
                .map(|x| {
                    acc *= 1.0 - 0.9 * x;
                    acc
                })
                .collect();
            SpectralModel::from_values(vals).unwrap()
        })
    }

    proptest! {
        #[test]
        fn select_dprime_matches_brute_force(m in explicit_model(), d_raw in 0usize..100, n in 1usize..200, c1 in 0.01f64..2.0) {
            let d = 1 + d_raw % m.dim();
            let consts = BoundConstants { c1, ..Default::default() };
            prop_assert_eq!(select_dprime(&m, d, n, &consts).unwrap(), brute_force_dprime(&m, d, n, c1));
        }

        #[test]
        fn bounds_dominate_oracle_and_are_monotone(m in explicit_model(), d_raw in 0usize..100, n in 1usize..500, t in 1.0f64..10.0) {
            let d = 1 + d_raw % m.dim();
            let c = BoundConstants::default();
            for dp in 1..=d {
                let a = theorem1_bound(&m, dp, d, n, t, &c).unwrap();
                prop_assert!(a.bound >= a.oracle);
                let a2 = theorem1_bound(&m, dp, d, n + 1, t, &c).unwrap();
                let a3 = theorem1_bound(&m, dp, d, n, t + 1.0, &c).unwrap();
                prop_assert!(a2.bound <= a.bound && a3.bound >= a.bound);
                if let Ok(b) = theorem2_bound(&m, dp, d, n, t, &c) {
                    prop_assert!(b.bound >= b.oracle);
                    let b2 = theorem2_bound(&m, dp, d, n + 1, t, &c).unwrap();
                    let b3 = theorem2_bound(&m, dp, d, n, t + 1.0, &c).unwrap();
                    prop_assert!(b2.bound <= b.bound && b3.bound >= b.bound);
                }
            }
        }

        #[test]
        fn hanson_wright_ratio_is_sqrt_n(m in explicit_model(), d_raw in 0usize..100, a in 0usize..100, n in 1usize..100_000) {
            let d = 1 + d_raw % m.dim();
            let dp = 1 + a % d;
            let h = hanson_wright_terms(&m, dp, d, n).unwrap();
            if h.v > 0.0 {
                prop_assert!((h.u2 / h.v - (n as f64).sqrt()).abs() <= 1e-12 * (n as f64).sqrt());
            }
        }
    }
}
