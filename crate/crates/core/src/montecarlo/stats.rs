//! Estimators over collected replicate records.

use statrs::distribution::{Beta, ContinuousCDF};

use super::ReplicateRecord;
use crate::bounds::hanson_wright_tail;
use crate::error::{Error, Result};
use crate::spectra::SpectralModel;

/// Empirical frequency with an exact two-sided binomial interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub successes: usize,
    pub trials: usize,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Error rows left out of `trials`.
    pub excluded: usize,
}

impl TailEstimate {
    pub fn new(successes: usize, trials: usize, confidence: f64) -> Result<Self> {
        let (ci_low, ci_high) = clopper_pearson(successes, trials, confidence)?;
        Ok(Self {
            successes,
            trials,
            point: successes as f64 / trials as f64,
            ci_low,
            ci_high,
            excluded: 0,
        })
    }

    /// Intervals overlap or `self` lies above `other`.
    pub fn not_below(&self, other: &TailEstimate) -> bool {
        self.ci_high >= other.ci_low
    }
}

/// Clopper-Pearson interval for `x` successes in `trials` at two-sided level `confidence`.
pub fn clopper_pearson(x: usize, trials: usize, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::EmptyInput("binomial trials"));
    }
    if x > trials {
        return Err(Error::Range {
            what: "successes",
            value: x,
            allowed: format!("0..={trials}"),
        });
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::param(
            "confidence",
            format!("must lie in (0, 1), got {confidence}"),
        ));
    }
    let a = (1.0 - confidence) / 2.0;
    let (xf, rf) = (x as f64, trials as f64);
    let beta = |p: f64, q: f64| {
        Beta::new(p, q).map_err(|e| Error::Numeric {
            stage: "clopper-pearson",
            detail: e.to_string(),
        })
    };
    let low = if x == 0 {
        0.0
    } else {
        beta(xf, rf - xf + 1.0)?.inverse_cdf(a)
    };
    let high = if x == trials {
        1.0
    } else {
        beta(xf + 1.0, rf - xf)?.inverse_cdf(1.0 - a)
    };
    Ok((low.clamp(0.0, 1.0), high.clamp(0.0, 1.0)))
}

/// Frequency of `event` over the successful records.
pub fn tail_probability<F>(
    records: &[ReplicateRecord],
    event: F,
    confidence: f64,
) -> Result<TailEstimate>
where
    F: Fn(&ReplicateRecord) -> bool,
{
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.is_ok()).collect();
    if ok.is_empty() {
        return Err(Error::EmptyInput("records"));
    }
    let x = ok.iter().filter(|r| event(r)).count();
    let mut est = TailEstimate::new(x, ok.len(), confidence)?;
    est.excluded = records.len() - ok.len();
    Ok(est)
}

/// Lower empirical quantile `x_(ceil(q R))`, no interpolation. NaNs are rejected.
pub fn lower_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile sample"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("q", format!("must lie in (0, 1), got {q}")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric {
            stage: "quantile",
            detail: "NaN in sample".into(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

fn common_cell(records: &[ReplicateRecord]) -> Result<(usize, usize, usize)> {
    let first = records.first().ok_or(Error::EmptyInput("records"))?;
    let cell = (first.n, first.d, first.d_prime);
    if records.iter().any(|r| (r.n, r.d, r.d_prime) != cell) {
        return Err(Error::param("records", "must share (n, d, d')"));
    }
    Ok(cell)
}

fn ok_values(records: &[ReplicateRecord], f: impl Fn(&ReplicateRecord) -> f64) -> Result<Vec<f64>> {
    let v: Vec<f64> = records.iter().filter(|r| r.is_ok()).map(f).collect();
    if v.is_empty() {
        return Err(Error::EmptyInput("successful records"));
    }
    Ok(v)
}

/// Smallest `C` with `R(P_hat) <= C * oracle_dprime` at empirical quantile `q`.
pub fn empirical_constant(records: &[ReplicateRecord], q: f64) -> Result<f64> {
    common_cell(records)?;
    lower_quantile(&ok_values(records, |r| r.ratio)?, q)
}

/// Smallest `C1` with `ratio <= 1 + C1 (d' + t) / n` at quantile `q`; zero when
/// the quantile ratio is already at most one.
pub fn calibrate_theorem1_constant(records: &[ReplicateRecord], t: f64, q: f64) -> Result<f64> {
    let (n, _, dp) = common_cell(records)?;
    let c = empirical_constant(records, q)?;
    Ok(((c - 1.0) * n as f64 / (dp as f64 + t)).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwExpectationReport {
    pub replicates: usize,
    pub mean: f64,
    pub sample_variance: f64,
    pub std_error: f64,
    /// `tr(Sigma_{d'}) * sum_{k>d'} lambda_k / n`
    pub expected: f64,
    pub z: f64,
    pub pass: bool,
}

/// Minimum replicate count accepted by [`hw_expectation_check`].
pub const HW_MIN_REPLICATES: usize = 100;

/// z-test of the mean of `cross_hs_sq` against its exact expectation.
pub fn hw_expectation_check(
    records: &[ReplicateRecord],
    model: &SpectralModel<f64>,
) -> Result<HwExpectationReport> {
    let (n, d, dp) = common_cell(records)?;
    let x = ok_values(records, |r| r.cross_hs_sq)?;
    if x.len() < HW_MIN_REPLICATES {
        return Err(Error::InsufficientReplicates {
            needed: HW_MIN_REPLICATES,
            got: x.len(),
        });
    }
    let stats = model.weighted_operator_stats(dp, d)?;
    let expected = stats.trace * model.tail_sum(dp)? / n as f64;
    let r = x.len() as f64;
    let mean = x.iter().sum::<f64>() / r;
    let sample_variance = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let std_error = (sample_variance / r).sqrt();
    let z = if std_error > 0.0 {
        (mean - expected) / std_error
    } else if (mean - expected).abs() <= 1e-12 * expected.abs().max(1e-300) {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(HwExpectationReport {
        replicates: x.len(),
        mean,
        sample_variance,
        std_error,
        expected,
        z,
        pass: z.abs() <= 3.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwTailCheck {
    pub s: f64,
    pub threshold: f64,
    /// `2 exp(-min(s^2/U^2, s/V) / C_hw)`
    pub bound: f64,
    /// Frequency of `sqrt(cross_hs_sq) >= threshold`.
    pub estimate: TailEstimate,
    /// The bound is not below the lower confidence limit of the frequency.
    pub pass: bool,
}

pub fn hw_tail_check(
    records: &[ReplicateRecord],
    model: &SpectralModel<f64>,
    s: f64,
    c_hw: f64,
    confidence: f64,
) -> Result<HwTailCheck> {
    let (n, d, dp) = common_cell(records)?;
    let tail = hanson_wright_tail(model, dp, d, n, s, c_hw)?;
    let estimate = tail_probability(
        records,
        |r| r.cross_hs_sq.sqrt() >= tail.threshold,
        confidence,
    )?;
    Ok(HwTailCheck {
        s,
        threshold: tail.threshold,
        bound: tail.probability,
        estimate,
        pass: estimate.ci_low <= tail.probability,
    })
}

/// Smallest `C_hw` in `[1e-3, 1e3]` passing [`hw_tail_check`] at every `s`,
/// found by bisection on `log C_hw`. `None` when even `1e3` fails.
pub fn calibrate_hw_constant(
    records: &[ReplicateRecord],
    model: &SpectralModel<f64>,
    s_grid: &[f64],
    confidence: f64,
) -> Result<Option<f64>> {
    if s_grid.is_empty() {
        return Err(Error::EmptyInput("s grid"));
    }
    let passes = |c: f64| -> Result<bool> {
        for &s in s_grid {
            if !hw_tail_check(records, model, s, c, confidence)?.pass {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let (mut lo, mut hi) = (1e-3f64.ln(), 1e3f64.ln());
    if !passes(hi.exp())? {
        return Ok(None);
    }
    if passes(lo.exp())? {
        return Ok(Some(lo.exp()));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if passes(mid.exp())? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::evaluate_record;
    use crate::pca::fit;
    use crate::sampler::{draw_batch, CoefficientLaw};

    /// Binomial CDF `P(X <= x)` for `X ~ Bin(r, p)`, summed in log space.
    fn binom_cdf(x: usize, r: usize, p: f64) -> f64 {
        let lnc = |k: usize| {
            statrs::function::gamma::ln_gamma(r as f64 + 1.0)
                - statrs::function::gamma::ln_gamma(k as f64 + 1.0)
                - statrs::function::gamma::ln_gamma((r - k) as f64 + 1.0)
        };
        (0..=x)
            .map(|k| (lnc(k) + k as f64 * p.ln() + (r - k) as f64 * (1.0 - p).ln()).exp())
            .sum()
    }

    fn bisect(f: impl Fn(f64) -> f64, target: f64) -> f64 {
        // f decreasing in p
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Interval defined by the binomial tails directly.
    fn cp_oracle(x: usize, r: usize, conf: f64) -> (f64, f64) {
        let a = (1.0 - conf) / 2.0;
        let low = if x == 0 {
            0.0
        } else {
            bisect(|p| binom_cdf(x - 1, r, p), 1.0 - a)
        };
        let high = if x == r {
            1.0
        } else {
            bisect(|p| binom_cdf(x, r, p), a)
        };
        (low, high)
    }

    fn record(ratio: f64) -> ReplicateRecord {
        ReplicateRecord {
            replicate_index: 0,
            n: 10,
            d: 1,
            d_prime: 1,
            selection_failed: false,
            r_hat: ratio,
            oracle_d: 1.0,
            oracle_dprime: 1.0,
            ratio,
            rn_hat: 0.0,
            rn_population: 0.0,
            cross_hs_sq: 0.0,
            inner_op: 0.0,
            lambda_hat_dplus1: 0.0,
            event_ok: true,
            tie: false,
            lambda_hat_head: vec![],
            error: None,
        }
    }

    #[test]
    fn zero_successes_closed_form() {
        let (lo, hi) = clopper_pearson(0, 100, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(0.01))).abs() < 1e-10);
        assert!((hi - 0.0362).abs() < 1e-4);
        let (lo, hi) = clopper_pearson(100, 100, 0.95).unwrap();
        assert_eq!(hi, 1.0);
        assert!((lo - 0.025f64.powf(0.01)).abs() < 1e-10);
    }

    #[test]
    fn half_successes_symmetric_and_matches_oracle() {
        let (lo, hi) = clopper_pearson(50, 100, 0.95).unwrap();
        assert!(((0.5 - lo) - (hi - 0.5)).abs() < 1e-3);
        let (olo, ohi) = cp_oracle(50, 100, 0.95);
        assert!((lo - olo).abs() < 1e-8, "{lo} vs {olo}");
        assert!((hi - ohi).abs() < 1e-8, "{hi} vs {ohi}");
    }

    #[test]
    fn interval_matches_oracle_across_counts() {
        for (x, r) in [(1usize, 10usize), (3, 40), (17, 200), (199, 200), (7, 7)] {
            let (lo, hi) = clopper_pearson(x, r, 0.9).unwrap();
            let (olo, ohi) = cp_oracle(x, r, 0.9);
            assert!(
                (lo - olo).abs() < 1e-8 && (hi - ohi).abs() < 1e-8,
                "{x}/{r}"
            );
            let p = x as f64 / r as f64;
            assert!(lo <= p && p <= hi);
        }
        assert!(clopper_pearson(0, 0, 0.95).is_err());
        assert!(clopper_pearson(3, 2, 0.95).is_err());
    }

    #[test]
    fn quantile_rule() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(lower_quantile(&v, 0.5).unwrap(), 3.0);
        assert_eq!(lower_quantile(&v, 0.2).unwrap(), 1.0);
        assert_eq!(lower_quantile(&v, 0.21).unwrap(), 2.0);
        assert_eq!(lower_quantile(&v, 0.99).unwrap(), 5.0);
        assert!(lower_quantile(&[], 0.5).is_err());
        assert!(lower_quantile(&v, 1.0).is_err());
    }

    #[test]
    fn constant_of_oracle_projections_is_one() {
        let recs: Vec<_> = (0..20).map(|_| record(1.0)).collect();
        for q in [0.01, 0.5, 0.99] {
            assert_eq!(empirical_constant(&recs, q).unwrap(), 1.0);
        }
        assert_eq!(calibrate_theorem1_constant(&recs, 1.0, 0.9).unwrap(), 0.0);
        let mut mixed = recs.clone();
        mixed[0].d = 2;
        assert!(empirical_constant(&mixed, 0.5).is_err());
        assert!(empirical_constant(&[], 0.5).is_err());
    }

    #[test]
    fn theorem1_calibration_inverts_prefactor() {
        let recs: Vec<_> = (1..=10).map(|i| record(1.0 + 0.01 * i as f64)).collect();
        // q = 0.5 picks the fifth value 1.05; n = 10, d' = 1, t = 1
        let c = calibrate_theorem1_constant(&recs, 1.0, 0.5).unwrap();
        assert!((c - 0.05 * 10.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn error_rows_are_excluded_and_counted() {
        let mut recs: Vec<_> = (0..4).map(|i| record(i as f64)).collect();
        recs[1].error = Some("boom".into());
        let est = tail_probability(&recs, |r| r.ratio > 1.5, 0.95).unwrap();
        assert_eq!((est.successes, est.trials, est.excluded), (2, 3, 1));
        assert!(est.ci_low <= est.point && est.point <= est.ci_high);
    }

    #[test]
    fn hw_checks_on_zero_tail_model() {
        let model = SpectralModel::from_values(vec![1.0, 0.4]).unwrap();
        let recs: Vec<_> = (0..120)
            .map(|r| {
                let b = draw_batch(&model, CoefficientLaw::Gaussian, 20, 3, r).unwrap();
                let f = fit(&b).unwrap();
                evaluate_record(&model, &b, &f, r, 2, 2, false).unwrap()
            })
            .collect();
        assert!(recs.iter().all(|r| r.cross_hs_sq == 0.0));
        let rep = hw_expectation_check(&recs, &model).unwrap();
        assert!(rep.pass && rep.expected == 0.0);
        assert!(matches!(
            hw_expectation_check(&recs[..50], &model),
            Err(Error::InsufficientReplicates {
                needed: 100,
                got: 50
            })
        ));
    }
}
