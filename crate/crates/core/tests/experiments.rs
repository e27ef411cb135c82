use pca_oracle::montecarlo::{
    calibrate_hw_constant, empirical_constant, hw_expectation_check, hw_tail_check,
    tail_probability,
};
use pca_oracle::{
    draw_batch, CoefficientLaw, EigenvalueProfile, Experiment, ExperimentConfig, ModelSpec,
    SpectralModel,
};

fn powers_of_half(dim: usize) -> Vec<f64> {
    (1..=dim as i32).map(|j| 0.5f64.powi(j)).collect()
}

fn geometric(n: Vec<usize>, replicates: usize, seed: u64) -> Experiment {
    let spec = ModelSpec::new(EigenvalueProfile::explicit(powers_of_half(20)), None);
    Experiment::new(ExperimentConfig::new(
        spec,
        CoefficientLaw::Gaussian,
        n,
        vec![2],
        replicates,
        seed,
    ))
    .unwrap()
}

#[test]
fn mean_ratio_regression_bracket() {
    let exp = geometric(vec![2000], 300, 41);
    let recs = exp.run(4).unwrap();
    assert!(recs.iter().all(|r| r.d_prime == 2 && !r.selection_failed));
    let mean = recs.iter().map(|r| r.ratio).sum::<f64>() / recs.len() as f64;
    assert!((1.0..=1.25).contains(&mean), "mean ratio {mean}");
}

#[test]
fn cross_term_variance_is_positive_for_gaussian_law() {
    let exp = geometric(vec![50], 2000, 5);
    let recs = exp.run(4).unwrap();
    let rep = hw_expectation_check(&recs, &exp.model).unwrap();
    assert!(rep.sample_variance > 0.0);
    assert!(rep.pass, "z = {}", rep.z);
}

#[test]
fn event_frequency_is_non_decreasing_along_n_ladder() {
    let ladder = vec![25, 50, 100, 200, 400, 800];
    let exp = geometric(ladder.clone(), 200, 8);
    let recs = exp.run(4).unwrap();
    let est: Vec<_> = recs
        .chunks(200)
        .map(|c| tail_probability(c, |r| r.event_ok, 0.95).unwrap())
        .collect();
    for w in est.windows(2) {
        assert!(w[1].not_below(&w[0]), "{:?} then {:?}", w[0], w[1]);
    }
    assert!(est.last().unwrap().point > est[0].point);
}

#[test]
fn averaged_covariance_error_decays_like_inverse_root() {
    let model = SpectralModel::from_values(vec![1.0, 0.5, 0.25, 0.125, 0.0625]).unwrap();
    let n = 20;
    let frob = |reps: u64| -> f64 {
        let mut acc = ndarray::Array2::<f64>::zeros((5, 5));
        for r in 0..reps {
            acc += &draw_batch(&model, CoefficientLaw::Gaussian, n, 99, r)
                .unwrap()
                .empirical_covariance();
        }
        acc /= reps as f64;
        for j in 0..5 {
            acc[[j, j]] -= model.lambda(j + 1);
        }
        acc.iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    // average over independent seeds per rung to tame the single-path noise
    let rungs = [50u64, 500, 5000];
    let errs: Vec<f64> = rungs.iter().map(|&r| frob(r)).collect();
    let x: Vec<f64> = rungs
        .iter()
        .map(|&r| ((n as u64 * r) as f64).ln())
        .collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / 3.0, y.iter().sum::<f64>() / 3.0);
    let slope = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}, errors {errs:?}");
}

#[test]
fn empirical_constant_shrinks_with_n() {
    let spec = ModelSpec::new(EigenvalueProfile::polynomial(1.0, 2.0), Some(64));
    let cfg = ExperimentConfig::new(
        spec,
        CoefficientLaw::Rademacher,
        vec![200, 1600],
        vec![4],
        150,
        17,
    );
    let exp = Experiment::new(cfg).unwrap();
    let recs = exp.run(4).unwrap();
    let (a, b) = recs.split_at(150);
    let (ca, cb) = (
        empirical_constant(a, 0.5).unwrap(),
        empirical_constant(b, 0.5).unwrap(),
    );
    assert!(ca.is_finite() && cb < ca, "{ca} vs {cb}");
    assert!(empirical_constant(&recs, 0.5).is_err());
}

#[test]
fn hanson_wright_constant_calibrates_on_two_models() {
    let s_grid = [0.005, 0.01, 0.02, 0.05];
    let exp = geometric(vec![100], 400, 23);
    let recs = exp.run(4).unwrap();
    let c = calibrate_hw_constant(&recs, &exp.model, &s_grid, 0.95)
        .unwrap()
        .expect("calibrates");
    assert!(c.is_finite() && c > 0.0);
    for &s in &s_grid {
        assert!(hw_tail_check(&recs, &exp.model, s, c, 0.95).unwrap().pass);
    }

    let spec = ModelSpec::new(EigenvalueProfile::polynomial(1.0, 2.0), Some(64));
    let cfg = ExperimentConfig::new(
        spec,
        CoefficientLaw::UniformSym,
        vec![100],
        vec![3],
        400,
        29,
    );
    let poly = Experiment::new(cfg).unwrap();
    let recs = poly.run(4).unwrap();
    let c2 = calibrate_hw_constant(&recs, &poly.model, &s_grid, 0.95)
        .unwrap()
        .expect("calibrates");
    assert!(c2.is_finite() && c2 > 0.0);
}
