//! Self-contained invariant and oracle checks behind the `check` subcommand.

use pca_oracle::bounds::{
    check_ratio_envelope, davis_kahan_bound, hanson_wright_terms, tail_envelope_ratio,
    BoundConstants,
};
use pca_oracle::montecarlo::{hw_expectation_check, minimality_violations, tail_probability};
use pca_oracle::pca::{empirical_reconstruction_error, fit_direct, fit_gram};
use pca_oracle::sampler::moment_check;
use pca_oracle::spectra::truncation_dim;
use pca_oracle::{
    draw_batch, CoefficientLaw, EigenvalueProfile, Experiment, ExperimentConfig, ModelSpec, Result,
    SpectralModel,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        Self { name, pass, detail }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

const SEED: u64 = 20_240_601;

fn powers_of_half(dim: usize) -> Vec<f64> {
    (1..=dim as i32).map(|j| 0.5f64.powi(j)).collect()
}

fn geometric_experiment(
    n: Vec<usize>,
    replicates: usize,
    law: CoefficientLaw,
) -> Result<Experiment> {
    let spec = ModelSpec::new(EigenvalueProfile::explicit(powers_of_half(20)), None);
    Experiment::new(ExperimentConfig::new(
        spec,
        law,
        n,
        vec![2],
        replicates,
        SEED,
    ))
}

fn hw_expectation(jobs: usize) -> Result<CheckOutcome> {
    let exp = geometric_experiment(vec![50], 2000, CoefficientLaw::Gaussian)?;
    let recs = exp.run(jobs)?;
    let rep = hw_expectation_check(&recs, &exp.model)?;
    let (pop, emp) = minimality_violations(&recs, 1e-12);
    Ok(CheckOutcome::new(
        "cross-term expectation",
        rep.pass && pop == 0 && emp == 0,
        format!(
            "mean {:.6} vs exact {:.6}, z = {:.3}, minimality violations {pop}/{emp}",
            rep.mean, rep.expected, rep.z
        ),
    ))
}

fn spectral_identities() -> Result<CheckOutcome> {
    let mut worst_identity = 0.0f64;
    let mut worst_eig = 0.0f64;
    for case in 0..60u64 {
        let dim = 5 + (case as usize * 7) % 26;
        let n = 3 + (case as usize * 11) % 48;
        let law = CoefficientLaw::ALL[case as usize % 3];
        let values: Vec<f64> = (1..=dim).map(|j| (j as f64).powf(-1.5)).collect();
        let model = SpectralModel::from_values(values)?;
        let batch = draw_batch(&model, law, n, SEED, case)?;
        let energy = batch.mean_squared_norm();
        let direct = fit_direct(&batch)?;
        let gram = fit_gram(&batch)?;
        let rank = direct.rank().min(gram.rank());
        for d in 1..rank {
            let rn = empirical_reconstruction_error(&batch, &direct, d)?;
            let tail: f64 = direct.lambda_hat()[d..].iter().sum();
            worst_identity = worst_identity.max((rn - tail).abs() / energy);
        }
        let trace: f64 = direct.lambda_hat().iter().sum();
        worst_identity = worst_identity.max((trace - energy).abs() / energy);
        for j in 0..rank {
            worst_eig = worst_eig.max((direct.lambda_hat()[j] - gram.lambda_hat()[j]).abs());
        }
    }
    Ok(CheckOutcome::new(
        "spectral identities and Gram path",
        worst_identity <= 1e-10 && worst_eig <= 1e-8,
        format!(
            "identity residual {worst_identity:.2e}, Gram/direct eigenvalue gap {worst_eig:.2e}"
        ),
    ))
}

fn envelopes() -> Result<CheckOutcome> {
    let profile = EigenvalueProfile::exponential(1.0, 1.0, 0.5);
    let trunc = truncation_dim(&profile, 64, 1e-6, 4096)?;
    let model = SpectralModel::materialize(profile, trunc.dim)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for d in 4..=64 {
        let r = tail_envelope_ratio(&model, d)?;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let mut violations = 0;
    let mut checked = 0;
    for (alpha, beta) in [(1.0, 0.5), (0.5, 0.3), (0.8, 1.0), (2.0, 0.7)] {
        let m = SpectralModel::materialize(EigenvalueProfile::exponential(1.0, alpha, beta), 400)?;
        for d in [3usize, 8, 20, 50, 99, 150] {
            for k in 1..=(d + 1) / 2 {
                checked += 1;
                if !check_ratio_envelope(&m, d, k)?.2 {
                    violations += 1;
                }
            }
        }
    }
    Ok(CheckOutcome::new(
        "decay envelopes",
        (2.0..=3.0).contains(&lo) && (2.0..=3.0).contains(&hi) && violations == 0,
        format!(
            "tail ratio in [{lo:.4}, {hi:.4}], ratio envelope violations {violations}/{checked}"
        ),
    ))
}

fn hanson_wright_identity() -> Result<CheckOutcome> {
    let model = SpectralModel::from_values(powers_of_half(20))?;
    let mut worst = 0.0f64;
    for n in [1usize, 7, 50, 100, 1000, 123_456] {
        for (dp, d) in [(1, 1), (1, 2), (2, 2), (3, 5)] {
            let h = hanson_wright_terms(&model, dp, d, n)?;
            let sqrt_n = (n as f64).sqrt();
            worst = worst.max((h.u2 / h.v - sqrt_n).abs() / sqrt_n);
        }
    }
    Ok(CheckOutcome::new(
        "Hanson-Wright scale identity",
        worst <= 1e-12,
        format!("max relative deviation of U2/V from sqrt(n): {worst:.2e}"),
    ))
}

fn davis_kahan_crossover() -> Result<CheckOutcome> {
    let model = SpectralModel::materialize(EigenvalueProfile::exponential(1.0, 1.0, 1.0), 200)?;
    let consts = BoundConstants::default();
    let mut first = None;
    for d in 1..40 {
        let r = davis_kahan_bound(&model, d, 1000, 1.0, &consts)?;
        if r.excess > r.oracle {
            first = Some(d);
            break;
        }
    }
    Ok(CheckOutcome::new(
        "Davis-Kahan crossover",
        first == Some(3),
        format!("excess first exceeds the oracle at d = {first:?}"),
    ))
}

fn event_trend(jobs: usize) -> Result<CheckOutcome> {
    let exp = geometric_experiment(vec![50, 500], 200, CoefficientLaw::Gaussian)?;
    let recs = exp.run(jobs)?;
    let (small, large) = recs.split_at(200);
    let a = tail_probability(small, |r| r.event_ok, 0.95)?;
    let b = tail_probability(large, |r| r.event_ok, 0.95)?;
    Ok(CheckOutcome::new(
        "event frequency trend",
        b.point > a.point,
        format!("n = 50: {:.3}, n = 500: {:.3}", a.point, b.point),
    ))
}

fn moments() -> Result<CheckOutcome> {
    let mut detail = Vec::new();
    let mut pass = true;
    for law in CoefficientLaw::ALL {
        let rep = moment_check(law, &[1, 2, 3, 4, 6, 8, 12, 16], 1e-12)?;
        pass &= rep.all_ok();
        detail.push(format!("{law} L = {:.4}", rep.constant));
    }
    Ok(CheckOutcome::new(
        "sub-Gaussian moments",
        pass,
        detail.join(", "),
    ))
}

/// Runs every check; a check that errors is reported as a failure.
pub fn run_checks(jobs: usize) -> Vec<CheckOutcome> {
    let checks: Vec<(&'static str, Box<dyn Fn() -> Result<CheckOutcome>>)> = vec![
        ("sub-Gaussian moments", Box::new(moments)),
        (
            "spectral identities and Gram path",
            Box::new(spectral_identities),
        ),
        (
            "cross-term expectation",
            Box::new(move || hw_expectation(jobs)),
        ),
        ("event frequency trend", Box::new(move || event_trend(jobs))),
        (
            "Hanson-Wright scale identity",
            Box::new(hanson_wright_identity),
        ),
        ("Davis-Kahan crossover", Box::new(davis_kahan_crossover)),
        ("decay envelopes", Box::new(envelopes)),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            f().unwrap_or_else(|e| CheckOutcome::new(name, false, format!("error: {e}")))
        })
        .collect()
}
