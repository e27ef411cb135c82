//! Empirical PCA on truncated Karhunen-Loeve models.
//!
//! A population model is a diagonal covariance with eigenvalues `lambda_1 >= lambda_2 >= ...`
//! truncated at dimension `D`; samples are `X = sum_j sqrt(lambda_j) eta_j u_j` with
//! independent unit-variance coefficients. The crate evaluates the reconstruction error
//! of the empirical top-`d` projector, the oracle tail `sum_{k>d} lambda_k`, the
//! non-asymptotic bounds relating them, and replicated Monte Carlo estimates.
//!
//! Numerical code is generic over [`Scalar`] (`f32`, `f64`); the experiment layer runs in `f64`.

pub mod bounds;
pub mod error;
pub mod montecarlo;
pub mod pca;
pub mod sampler;
pub mod scalar;
pub mod spectra;

pub use bounds::{bound_report, select_dprime, BoundConstants, BoundReport};
pub use error::{Error, Result};
pub use montecarlo::{Experiment, ExperimentConfig, ModelSpec, ReplicateRecord, TailEstimate};
pub use pca::{fit, PcaFit, PerturbationStats};
pub use sampler::{draw_batch, CoefficientLaw, SampleBatch};
pub use scalar::Scalar;
pub use spectra::{EigenvalueProfile, SpectralModel, WeightedOperatorStats};

pub type SpectralModelF64 = SpectralModel<f64>;
pub type SpectralModelF32 = SpectralModel<f32>;
pub type EigenvalueProfileF64 = EigenvalueProfile<f64>;
pub type EigenvalueProfileF32 = EigenvalueProfile<f32>;
pub type SampleBatchF64 = SampleBatch<f64>;
pub type SampleBatchF32 = SampleBatch<f32>;
pub type PcaFitF64 = PcaFit<f64>;
pub type PcaFitF32 = PcaFit<f32>;
pub type BoundReportF64 = BoundReport<f64>;
pub type BoundReportF32 = BoundReport<f32>;
