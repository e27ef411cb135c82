//! Eigenvalue profiles and the purely spectral functionals behind every bound.
//!
//! A [`SpectralModel`] is the ground-truth covariance in its own eigenbasis: a
//! non-increasing vector `lambda_1 >= ... >= lambda_D > 0`. Indices in the public
//! API are 1-based to match the usual `lambda_j` notation; any index past `D`
//! reads as a zero eigenvalue (the truncated operator has no mass there).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, CompensatedSum, Scalar};

/// Relative size below which `lambda_a - lambda_b` counts as no gap at all.
pub const GAP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EigenvalueProfile<T> {
    /// `lambda_j = K j^(-alpha)`, `alpha > 1`.
    Polynomial {
        #[serde(rename = "K")]
        k: T,
        alpha: T,
    },
    /// `lambda_j = K exp(-alpha j^beta)`, `alpha > 0`, `beta in (0, 1]`.
    Exponential {
        #[serde(rename = "K")]
        k: T,
        alpha: T,
        beta: T,
    },
    /// A finite, strictly positive, non-increasing list.
    Explicit { values: Vec<T> },
}

impl<T: Scalar> EigenvalueProfile<T> {
    pub fn polynomial(k: T, alpha: T) -> Self {
        Self::Polynomial { k, alpha }
    }

    pub fn exponential(k: T, alpha: T, beta: T) -> Self {
        Self::Exponential { k, alpha, beta }
    }

    pub fn explicit(values: Vec<T>) -> Self {
        Self::Explicit { values }
    }

    pub fn is_parametric(&self) -> bool {
        !matches!(self, Self::Explicit { .. })
    }

    /// Checks the parameter constraints and reports every violation at once.
    pub fn violations(&self) -> Vec<Error> {
        let mut out = Vec::new();
        let positive = |x: T| x.is_finite() && x > T::zero();
        match self {
            Self::Polynomial { k, alpha } => {
                if !positive(*k) {
                    out.push(Error::param("K", format!("must be positive, got {k}")));
                }
                if !(alpha.is_finite() && *alpha > T::one()) {
                    out.push(Error::param(
                        "alpha",
                        format!("polynomial decay needs alpha > 1 for summability, got {alpha}"),
                    ));
                }
            }
            Self::Exponential { k, alpha, beta } => {
                if !positive(*k) {
                    out.push(Error::param("K", format!("must be positive, got {k}")));
                }
                if !positive(*alpha) {
                    out.push(Error::param(
                        "alpha",
                        format!("must be positive, got {alpha}"),
                    ));
                }
                if !(beta.is_finite() && *beta > T::zero() && *beta <= T::one()) {
                    out.push(Error::param(
                        "beta",
                        format!("must lie in (0, 1], got {beta}"),
                    ));
                }
            }
            Self::Explicit { values } => {
                if values.is_empty() {
                    out.push(Error::param("values", "explicit profile is empty"));
                }
                if let Some(bad) = values.iter().position(|v| !positive(*v)) {
                    out.push(Error::param(
                        "values",
                        format!(
                            "entry {} is not strictly positive: {}",
                            bad + 1,
                            values[bad]
                        ),
                    ));
                }
                if let Some(w) = values.windows(2).position(|w| w[1] > w[0]) {
                    out.push(Error::param(
                        "values",
                        format!("not non-increasing at position {}", w + 2),
                    ));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Profile formula at 1-based index `j`. For explicit profiles returns the
    /// stored value, or zero past the end of the list.
    pub fn value_at(&self, j: usize) -> T {
        debug_assert!(j >= 1);
        match self {
            Self::Polynomial { k, alpha } => *k * T::from_usize_lossy(j).powf(-*alpha),
            Self::Exponential { k, alpha, beta } => {
                *k * (-*alpha * T::from_usize_lossy(j).powf(*beta)).exp()
            }
            Self::Explicit { values } => values.get(j - 1).copied().unwrap_or_else(T::zero),
        }
    }

    /// Short human-readable identifier, e.g. `polynomial(K=1,alpha=2)`.
    pub fn describe(&self) -> String {
        match self {
            Self::Polynomial { k, alpha } => format!("polynomial(K={k},alpha={alpha})"),
            Self::Exponential { k, alpha, beta } => {
                format!("exponential(K={k},alpha={alpha},beta={beta})")
            }
            Self::Explicit { values } => format!("explicit(len={})", values.len()),
        }
    }

    /// Analytic upper bound on the mass `sum_{k > dim} lambda_k` that truncation
    /// to `dim` coordinates discards. Zero for explicit profiles.
    pub fn analytic_tail_beyond(&self, dim: usize) -> f64 {
        let d = dim as f64;
        match self {
            Self::Polynomial { k, alpha } => {
                // sum_{k>D} k^-a <= int_D^inf x^-a dx
                let (k, a) = (k.as_f64(), alpha.as_f64());
                k * d.powf(1.0 - a) / (a - 1.0)
            }
            Self::Exponential { k, alpha, beta } => {
                // sum_{k>D} e^{-a k^b} <= int_D^inf e^{-a x^b} dx = Gamma(1/b, a D^b) / (b a^{1/b})
                let (k, a, b) = (k.as_f64(), alpha.as_f64(), beta.as_f64());
                let s = 1.0 / b;
                let x = a * d.powf(b);
                k * statrs::function::gamma::gamma_ui(s, x) / (b * a.powf(s))
            }
            Self::Explicit { values } => {
                if dim >= values.len() {
                    0.0
                } else {
                    values[dim..].iter().map(|v| v.as_f64()).sum()
                }
            }
        }
    }
}

/// Outcome of the truncation-dimension rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub dim: usize,
    /// Analytic bound on the discarded mass beyond `dim`.
    pub discarded: f64,
    /// `discarded / sum_{d_max < k <= dim} lambda_k`.
    pub relative: f64,
    /// True when `max_dim` stopped the search before `relative <= tol`.
    pub capped: bool,
}

/// Smallest `D <= max_dim` whose discarded tail mass is at most `tol` times the
/// retained tail `sum_{d_max < k <= D} lambda_k`.
pub fn truncation_dim<T: Scalar>(
    profile: &EigenvalueProfile<T>,
    d_max: usize,
    tol: f64,
    max_dim: usize,
) -> Result<Truncation> {
    profile.validate()?;
    if let EigenvalueProfile::Explicit { values } = profile {
        return Ok(Truncation {
            dim: values.len(),
            discarded: 0.0,
            relative: 0.0,
            capped: false,
        });
    }
    if !(tol > 0.0) {
        return Err(Error::param(
            "truncation_tol",
            format!("must be positive, got {tol}"),
        ));
    }
    if max_dim <= d_max {
        return Err(Error::param(
            "max_dim",
            format!("must exceed the largest d = {d_max}, got {max_dim}"),
        ));
    }
    let eval = |dim: usize| -> (f64, f64) {
        let kept: f64 = compensated_sum(
            (d_max + 1..=dim)
                .rev()
                .map(|j| profile.value_at(j).as_f64()),
        );
        let discarded = profile.analytic_tail_beyond(dim);
        (discarded, discarded / kept)
    };
    let ok = |dim: usize| eval(dim).1 <= tol;

    let mut hi = d_max + 1;
    while !ok(hi) {
        if hi >= max_dim {
            let (discarded, relative) = eval(max_dim);
            return Ok(Truncation {
                dim: max_dim,
                discarded,
                relative,
                capped: true,
            });
        }
        hi = (hi * 2).min(max_dim);
    }
    // smallest passing dim in (lo, hi]
    let mut lo = (hi / 2).max(d_max);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (discarded, relative) = eval(hi);
    Ok(Truncation {
        dim: hi,
        discarded,
        relative,
        capped: false,
    })
}

/// Norms of the weighted operator `S Sigma S` with `S = sum_{j<=d'} (lambda_j - lambda_{d+1})^{-1/2} P_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedOperatorStats<T> {
    /// `lambda_{d'} / (lambda_{d'} - lambda_{d+1})`
    pub op_norm: T,
    /// `sum_{j<=d'} lambda_j / (lambda_j - lambda_{d+1})`
    pub trace: T,
    /// `sum_{j<=d'} lambda_j^2 / (lambda_j - lambda_{d+1})^2`
    pub hs_norm_sq: T,
}

/// Truncated covariance spectrum in diagonal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel<T> {
    profile: EigenvalueProfile<T>,
    eigenvalues: Vec<T>,
    /// `tails[d] = sum_{d < k <= D} lambda_k`, length `D + 1`.
    tails: Vec<T>,
}

impl<T: Scalar> SpectralModel<T> {
    /// Evaluates `profile` at `j = 1..=dim`. Explicit profiles require `dim` to
    /// equal the list length.
    pub fn materialize(profile: EigenvalueProfile<T>, dim: usize) -> Result<Self> {
        profile.validate()?;
        if dim == 0 {
            return Err(Error::param(
                "dim",
                "truncation dimension must be at least 1",
            ));
        }
        if let EigenvalueProfile::Explicit { values } = &profile {
            if values.len() != dim {
                return Err(Error::param(
                    "dim",
                    format!(
                        "explicit profile has {} values but dim = {dim}",
                        values.len()
                    ),
                ));
            }
        }
        let eigenvalues: Vec<T> = (1..=dim).map(|j| profile.value_at(j)).collect();
        if let Some(j) = eigenvalues
            .iter()
            .position(|v| !(*v > T::zero()) || !v.is_finite())
        {
            return Err(Error::param(
                "dim",
                format!(
                    "lambda_{} = {} underflows; choose a smaller dim",
                    j + 1,
                    eigenvalues[j]
                ),
            ));
        }
        let mut tails = vec![T::zero(); dim + 1];
        let mut acc = CompensatedSum::new();
        for d in (0..dim).rev() {
            acc.add(eigenvalues[d]);
            tails[d] = acc.value();
        }
        Ok(Self {
            profile,
            eigenvalues,
            tails,
        })
    }

    pub fn from_values(values: Vec<T>) -> Result<Self> {
        let dim = values.len();
        Self::materialize(EigenvalueProfile::explicit(values), dim)
    }

    pub fn profile(&self) -> &EigenvalueProfile<T> {
        &self.profile
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// `lambda_j` for 1-based `j`; zero past the truncation.
    #[inline]
    pub fn lambda(&self, j: usize) -> T {
        debug_assert!(j >= 1, "eigenvalue indices are 1-based");
        self.eigenvalues.get(j - 1).copied().unwrap_or_else(T::zero)
    }

    pub fn trace(&self) -> T {
        self.tails[0]
    }

    pub fn describe(&self) -> String {
        format!("{}[D={}]", self.profile.describe(), self.dim())
    }

    /// `sum_{d < k <= D} lambda_k`, the minimal rank-`d` reconstruction error.
    pub fn tail_sum(&self, d: usize) -> Result<T> {
        self.tails.get(d).copied().ok_or_else(|| Error::Range {
            what: "d",
            value: d,
            allowed: format!("0..={}", self.dim()),
        })
    }

    fn check_pair(&self, d_prime: usize, d: usize) -> Result<()> {
        if d_prime == 0 || d_prime > d {
            return Err(Error::Range {
                what: "d_prime",
                value: d_prime,
                allowed: format!("1..={d}"),
            });
        }
        if d > self.dim() {
            return Err(Error::Range {
                what: "d",
                value: d,
                allowed: format!("{d_prime}..={}", self.dim()),
            });
        }
        let upper = self.lambda(d_prime);
        let lower = self.lambda(d + 1);
        if upper - lower <= T::rel_tol(GAP_TOLERANCE) * upper {
            return Err(Error::DegenerateGap {
                upper: d_prime,
                lower: d + 1,
                lambda_upper: upper.as_f64(),
                lambda_lower: lower.as_f64(),
            });
        }
        Ok(())
    }

    pub fn weighted_operator_stats(
        &self,
        d_prime: usize,
        d: usize,
    ) -> Result<WeightedOperatorStats<T>> {
        self.check_pair(d_prime, d)?;
        let mu = self.lambda(d + 1);
        let ratios = || {
            (1..=d_prime).rev().map(move |j| {
                let l = self.lambda(j);
                l / (l - mu)
            })
        };
        Ok(WeightedOperatorStats {
            op_norm: self.lambda(d_prime) / (self.lambda(d_prime) - mu),
            trace: compensated_sum(ratios()),
            hs_norm_sq: compensated_sum(ratios().map(|r| r * r)),
        })
    }

    /// `sum_{d < k <= D} lambda_k / (lambda_{d'} - lambda_k)`.
    pub fn resolvent_tail_sum(&self, d_prime: usize, d: usize) -> Result<T> {
        self.check_pair(d_prime, d)?;
        let top = self.lambda(d_prime);
        Ok(compensated_sum(
            self.eigenvalues
                .iter()
                .skip(d)
                .rev()
                .map(|&l| l / (top - l)),
        ))
    }
}
