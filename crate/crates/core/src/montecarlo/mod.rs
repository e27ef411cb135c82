//! Replicated experiments: draw, fit, evaluate, and aggregate.
//!
//! Randomness derives only from `(seed, replicate_index)`, and results are
//! collected by index, so the record set does not depend on how many worker
//! threads ran the replicates.

mod output;
mod stats;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{select_dprime, BoundConstants};
use crate::error::{Error, Result};
use crate::pca::{
    empirical_error_of_population_projector, empirical_reconstruction_error, event_indicator, fit,
    perturbation_stats, reconstruction_error, PcaFit,
};
use crate::sampler::{draw_batch, CoefficientLaw, SampleBatch};
use crate::spectra::{truncation_dim, EigenvalueProfile, SpectralModel, Truncation};

pub use output::{
    summarize, sweep_rows, write_records_csv, write_summary_csv, write_sweep_csv, SummaryRow,
    SweepRow, RECORD_CSV_HEADER,
};
pub use stats::{
    calibrate_hw_constant, calibrate_theorem1_constant, clopper_pearson, empirical_constant,
    hw_expectation_check, hw_tail_check, lower_quantile, tail_probability, HwExpectationReport,
    HwTailCheck, TailEstimate,
};

fn default_truncation_tol() -> f64 {
    1e-6
}

fn default_max_dim() -> usize {
    512
}

fn default_t() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}

fn default_confidence() -> f64 {
    0.95
}

/// Population model as configured: a profile plus an optional explicit
/// truncation dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub profile: EigenvalueProfile<f64>,
    /// Fixed `D`; when absent the truncation rule picks it.
    #[serde(default)]
    pub dim: Option<usize>,
    /// Discarded tail mass allowed, relative to the retained tail beyond the largest `d`.
    #[serde(default = "default_truncation_tol")]
    pub truncation_tol: f64,
    /// Upper limit for the truncation rule.
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
}

impl ModelSpec {
    pub fn new(profile: EigenvalueProfile<f64>, dim: Option<usize>) -> Self {
        Self {
            profile,
            dim,
            truncation_tol: default_truncation_tol(),
            max_dim: default_max_dim(),
        }
    }

    /// Materializes the model, choosing `D` when not fixed.
    pub fn resolve(&self, d_max: usize) -> Result<(SpectralModel<f64>, Truncation)> {
        let trunc = match (self.dim, &self.profile) {
            (_, EigenvalueProfile::Explicit { values }) => Truncation {
                dim: values.len(),
                discarded: 0.0,
                relative: 0.0,
                capped: false,
            },
            (Some(dim), p) => {
                let discarded = p.analytic_tail_beyond(dim);
                let kept: f64 = (d_max + 1..=dim).map(|j| p.value_at(j)).sum();
                Truncation {
                    dim,
                    discarded,
                    relative: discarded / kept,
                    capped: false,
                }
            }
            (None, p) => truncation_dim(p, d_max, self.truncation_tol, self.max_dim)?,
        };
        let model = SpectralModel::materialize(self.profile.clone(), trunc.dim)?;
        Ok((model, trunc))
    }
}

/// Optional output file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "OutputSpec::default_records")]
    pub records: String,
    #[serde(default = "OutputSpec::default_summary")]
    pub summary: String,
    #[serde(default = "OutputSpec::default_bounds")]
    pub bounds: String,
    #[serde(default = "OutputSpec::default_sweep")]
    pub sweep: String,
}

impl OutputSpec {
    fn default_records() -> String {
        "records.csv".into()
    }
    fn default_summary() -> String {
        "summary.csv".into()
    }
    fn default_bounds() -> String {
        "bounds.csv".into()
    }
    fn default_sweep() -> String {
        "sweep.csv".into()
    }
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            records: Self::default_records(),
            summary: Self::default_summary(),
            bounds: Self::default_bounds(),
            sweep: Self::default_sweep(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub law: CoefficientLaw,
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    #[serde(default = "default_t")]
    pub t: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    /// Two-sided level of the binomial intervals.
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub constants: BoundConstants,
    /// Explicit `d'` grid for bound tables; the selection rule is used when absent.
    #[serde(default)]
    pub d_prime: Option<Vec<usize>>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

impl ExperimentConfig {
    pub fn new(
        model: ModelSpec,
        law: CoefficientLaw,
        n: Vec<usize>,
        d: Vec<usize>,
        replicates: usize,
        seed: u64,
    ) -> Self {
        Self {
            model,
            law,
            n,
            d,
            t: default_t(),
            replicates,
            seed,
            confidence: default_confidence(),
            constants: BoundConstants::default(),
            d_prime: None,
            outputs: OutputSpec::default(),
        }
    }

    pub fn d_max(&self) -> usize {
        self.d.iter().copied().max().unwrap_or(0)
    }

    /// Every validation problem, as `(key, message)`.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, m: String| out.push((k.to_string(), m));
        for e in self.model.profile.violations() {
            if let Error::Parameter { name, reason } = e {
                push(&format!("model.profile.{name}"), reason);
            }
        }
        if self.model.dim == Some(0) {
            push("model.dim", "must be at least 1".into());
        }
        if !(self.model.truncation_tol > 0.0) {
            push("model.truncation_tol", "must be positive".into());
        }
        if self.n.is_empty() {
            push("n", "list must be non-empty".into());
        }
        if self.d.is_empty() {
            push("d", "list must be non-empty".into());
        }
        if self.d.contains(&0) {
            push("d", "entries must be at least 1".into());
        }
        if self.t.is_empty() {
            push("t", "list must be non-empty".into());
        }
        if self.t.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            push("t", "entries must be positive".into());
        }
        if self.replicates == 0 {
            push("replicates", "must be at least 1".into());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            push(
                "confidence",
                format!("must lie in (0, 1), got {}", self.confidence),
            );
        }
        let d_max = self.d_max();
        if let Some(&n) = self.n.iter().find(|&&n| n < d_max + 1) {
            push(
                "n",
                format!("n = {n} is smaller than max(d) + 1 = {}", d_max + 1),
            );
        }
        let dim_limit = match (&self.model.profile, self.model.dim) {
            (EigenvalueProfile::Explicit { values }, _) => Some(values.len()),
            (_, Some(dim)) => Some(dim),
            _ => None,
        };
        if let Some(dim) = dim_limit {
            if d_max >= dim {
                push(
                    "d",
                    format!("max(d) = {d_max} must be below the model dimension {dim}"),
                );
            }
        } else if d_max >= self.model.max_dim {
            push(
                "d",
                format!(
                    "max(d) = {d_max} must be below model.max_dim = {}",
                    self.model.max_dim
                ),
            );
        }
        if let Some(dp) = &self.d_prime {
            if dp.is_empty() || dp.contains(&0) {
                push(
                    "d_prime",
                    "entries must be at least 1 and the list non-empty".into(),
                );
            }
        }
        for e in self.constants.violations() {
            if let Error::Parameter { name, reason } = e {
                push(&format!("constants.{name}"), reason);
            }
        }
        out
    }
}

/// One `(n, d, replicate)` evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub replicate_index: u64,
    pub n: usize,
    pub d: usize,
    pub d_prime: usize,
    /// No `d'` satisfied the selection rule; `d' = d` was used instead.
    pub selection_failed: bool,
    /// `R(P_hat_{<=d})`
    pub r_hat: f64,
    /// `sum_{k>d} lambda_k`
    pub oracle_d: f64,
    /// `sum_{k>d'} lambda_k`
    pub oracle_dprime: f64,
    /// `r_hat / oracle_dprime`; NaN when the oracle is zero.
    pub ratio: f64,
    /// `R_n(P_hat_{<=d})`
    pub rn_hat: f64,
    /// `R_n(P_{<=d})`
    pub rn_population: f64,
    pub cross_hs_sq: f64,
    pub inner_op: f64,
    pub lambda_hat_dplus1: f64,
    pub event_ok: bool,
    /// `lambda_hat_d == lambda_hat_{d+1}`
    pub tie: bool,
    /// `lambda_hat_1 ..= lambda_hat_{d+1}`
    pub lambda_hat_head: Vec<f64>,
    pub error: Option<String>,
}

impl ReplicateRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    fn failed(
        replicate_index: u64,
        n: usize,
        d: usize,
        d_prime: usize,
        selection_failed: bool,
        err: &Error,
    ) -> Self {
        Self {
            replicate_index,
            n,
            d,
            d_prime,
            selection_failed,
            r_hat: f64::NAN,
            oracle_d: f64::NAN,
            oracle_dprime: f64::NAN,
            ratio: f64::NAN,
            rn_hat: f64::NAN,
            rn_population: f64::NAN,
            cross_hs_sq: f64::NAN,
            inner_op: f64::NAN,
            lambda_hat_dplus1: f64::NAN,
            event_ok: false,
            tie: false,
            lambda_hat_head: Vec::new(),
            error: Some(err.to_string()),
        }
    }
}

/// A validated configuration together with its materialized model.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: SpectralModel<f64>,
    pub truncation: Truncation,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        if let Some((key, msg)) = config.violations().into_iter().next() {
            return Err(Error::Parameter {
                name: "config",
                reason: format!("{key}: {msg}"),
            });
        }
        let (model, truncation) = config.model.resolve(config.d_max())?;
        Ok(Self {
            config,
            model,
            truncation,
        })
    }

    /// `(d', selection_failed)` for one `(n, d)` cell.
    pub fn dprime_for(&self, n: usize, d: usize) -> Result<(usize, bool)> {
        Ok(
            match select_dprime(&self.model, d, n, &self.config.constants)? {
                Some(dp) => (dp, false),
                None => (d, true),
            },
        )
    }

    /// Runs every `(n, replicate)` task on `jobs` worker threads and returns the
    /// records ordered by `(n, d, replicate_index)` in configuration order.
    pub fn run(&self, jobs: usize) -> Result<Vec<ReplicateRecord>> {
        let cfg = &self.config;
        let mut cells = Vec::new();
        for &n in &cfg.n {
            let per_d: Vec<(usize, usize, bool)> = cfg
                .d
                .iter()
                .map(|&d| self.dprime_for(n, d).map(|(dp, failed)| (d, dp, failed)))
                .collect::<Result<_>>()?;
            cells.push((n, per_d));
        }
        let tasks: Vec<(usize, u64)> = cells
            .iter()
            .enumerate()
            .flat_map(|(ci, _)| (0..cfg.replicates as u64).map(move |r| (ci, r)))
            .collect();

        let work = || -> Vec<Vec<ReplicateRecord>> {
            tasks
                .par_iter()
                .map(|&(ci, r)| {
                    let (n, per_d) = &cells[ci];
                    self.replicate(*n, per_d, r)
                })
                .collect()
        };
        let per_task = if jobs <= 1 {
            tasks
                .iter()
                .map(|&(ci, r)| self.replicate(cells[ci].0, &cells[ci].1, r))
                .collect()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::Numeric {
                    stage: "thread pool",
                    detail: e.to_string(),
                })?
                .install(work)
        };

        // regroup: (n, d, replicate)
        let reps = cfg.replicates;
        let mut out = Vec::with_capacity(per_task.len() * cfg.d.len());
        for ci in 0..cells.len() {
            for di in 0..cfg.d.len() {
                for r in 0..reps {
                    out.push(per_task[ci * reps + r][di].clone());
                }
            }
        }
        Ok(out)
    }

    fn replicate(&self, n: usize, per_d: &[(usize, usize, bool)], r: u64) -> Vec<ReplicateRecord> {
        let outcome = draw_batch(&self.model, self.config.law, n, self.config.seed, r)
            .and_then(|b| fit(&b).map(|f| (b, f)));
        match outcome {
            Ok((batch, pca)) => per_d
                .iter()
                .map(|&(d, dp, failed)| {
                    evaluate_record(&self.model, &batch, &pca, r, d, dp, failed)
                        .unwrap_or_else(|e| ReplicateRecord::failed(r, n, d, dp, failed, &e))
                })
                .collect(),
            Err(e) => per_d
                .iter()
                .map(|&(d, dp, failed)| ReplicateRecord::failed(r, n, d, dp, failed, &e))
                .collect(),
        }
    }
}

/// Computes every record field for one fitted batch.
pub fn evaluate_record(
    model: &SpectralModel<f64>,
    batch: &SampleBatch<f64>,
    pca: &PcaFit<f64>,
    replicate_index: u64,
    d: usize,
    d_prime: usize,
    selection_failed: bool,
) -> Result<ReplicateRecord> {
    let r_hat = reconstruction_error(model, pca, d)?;
    let oracle_d = model.tail_sum(d)?;
    let oracle_dprime = model.tail_sum(d_prime)?;
    let stats = perturbation_stats(model, batch, pca, d_prime, d)?;
    let record = ReplicateRecord {
        replicate_index,
        n: batch.n(),
        d,
        d_prime,
        selection_failed,
        r_hat,
        oracle_d,
        oracle_dprime,
        ratio: if oracle_dprime > 0.0 {
            r_hat / oracle_dprime
        } else {
            f64::NAN
        },
        rn_hat: empirical_reconstruction_error(batch, pca, d)?,
        rn_population: empirical_error_of_population_projector(batch, d)?,
        cross_hs_sq: stats.cross_hs_sq,
        inner_op: stats.inner_op,
        lambda_hat_dplus1: stats.lambda_hat_dplus1,
        event_ok: event_indicator(&stats, model, d_prime, d),
        tie: pca.tie_at(d),
        lambda_hat_head: (1..=d + 1).map(|j| pca.lambda_hat_at(j)).collect(),
        error: None,
    };
    let ratio_ok = record.ratio.is_finite() || oracle_dprime == 0.0;
    let finite = ratio_ok
        && [
            record.r_hat,
            record.rn_hat,
            record.rn_population,
            record.cross_hs_sq,
            record.inner_op,
        ]
        .iter()
        .all(|x| x.is_finite());
    if !finite {
        return Err(Error::Numeric {
            stage: "record",
            detail: "non-finite record field".into(),
        });
    }
    Ok(record)
}

/// Counts of minimality violations over a record set: population
/// (`R(P_hat) < oracle_d - tol`) and empirical (`R_n(P_hat) > R_n(P) + tol`).
pub fn minimality_violations(records: &[ReplicateRecord], tol: f64) -> (usize, usize) {
    records
        .iter()
        .filter(|r| r.is_ok())
        .fold((0, 0), |(p, e), r| {
            (
                p + usize::from(r.r_hat < r.oracle_d - tol),
                e + usize::from(r.rn_hat > r.rn_population + tol),
            )
        })
}
