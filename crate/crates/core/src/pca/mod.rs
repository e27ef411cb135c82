//! Empirical PCA, reconstruction errors and the perturbation statistics that
//! drive the high-probability analysis.
//!
//! Everything is expressed in the population eigenbasis, where `Sigma` is
//! diagonal. The fitted eigenvectors are stored as coordinate rows in that basis,
//! and all reconstruction errors are computed from projector weights
//! `sum_{i<=d} basis[i][j]^2`, never from dense `D x D` projectors.

pub mod eigen;

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::sampler::SampleBatch;
use crate::scalar::{compensated_sum, Scalar};
use crate::spectra::{SpectralModel, GAP_TOLERANCE};

pub use eigen::{symmetric_eigen, symmetric_spectral_norm, SymmetricEigen};

/// Relative floor under which a negative solver eigenvalue is a genuine failure
/// rather than round-off.
const NEGATIVE_EIGENVALUE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitPath {
    /// Eigendecomposition of the `D x D` sample covariance.
    Direct,
    /// Eigendecomposition of the `n x n` Gram matrix `X X^T / n`, mapped back.
    Gram,
}

/// Empirical eigenpairs of `Sigma_hat`.
#[derive(Debug, Clone)]
pub struct PcaFit<T> {
    lambda_hat: Vec<T>,
    /// `min(n, D) x D`; row `i` holds the coordinates of `u_hat_{i+1}`.
    basis: Array2<T>,
    n: usize,
    path: FitPath,
}

impl<T: Scalar> PcaFit<T> {
    /// Eigenvalues of `Sigma_hat`, non-increasing, length `min(n, D)`.
    pub fn lambda_hat(&self) -> &[T] {
        &self.lambda_hat
    }

    pub fn basis(&self) -> &Array2<T> {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.lambda_hat.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn path(&self) -> FitPath {
        self.path
    }

    /// `lambda_hat_j` for 1-based `j`; zero past the rank.
    pub fn lambda_hat_at(&self, j: usize) -> T {
        self.lambda_hat.get(j - 1).copied().unwrap_or_else(T::zero)
    }

    /// True when `lambda_hat_d` and `lambda_hat_{d+1}` coincide, in which case
    /// the empirical projector of rank `d` is not unique.
    pub fn tie_at(&self, d: usize) -> bool {
        if d == 0 || d >= self.rank() {
            return false;
        }
        let (a, b) = (self.lambda_hat[d - 1], self.lambda_hat[d]);
        a - b <= T::rel_tol(GAP_TOLERANCE) * a
    }

    /// `sum_{i<=d} basis[i][j]^2` for every coordinate `j`: the diagonal of the
    /// empirical projector of rank `d`.
    pub fn projector_diagonal(&self, d: usize) -> Result<Vec<T>> {
        self.check_rank(d)?;
        let head = self.basis.slice(s![..d, ..]);
        Ok(head
            .axis_iter(Axis(1))
            .map(|col| col.iter().map(|x| *x * *x).sum())
            .collect())
    }

    /// Dense rank-`d` projector. Intended for tests and diagnostics.
    pub fn projector(&self, d: usize) -> Result<Array2<T>> {
        self.check_rank(d)?;
        let head = self.basis.slice(s![..d, ..]);
        Ok(head.t().dot(&head))
    }

    fn check_rank(&self, d: usize) -> Result<()> {
        if d > self.rank() {
            return Err(Error::Range {
                what: "d",
                value: d,
                allowed: format!("0..={}", self.rank()),
            });
        }
        Ok(())
    }
}

/// Fits PCA to `batch`, using the Gram route when `n < D`.
pub fn fit<T: Scalar>(batch: &SampleBatch<T>) -> Result<PcaFit<T>> {
    if batch.n() < batch.dim() {
        fit_gram(batch)
    } else {
        fit_direct(batch)
    }
}

/// Eigendecomposition of the full `D x D` sample covariance, truncated to the
/// leading `min(n, D)` pairs.
pub fn fit_direct<T: Scalar>(batch: &SampleBatch<T>) -> Result<PcaFit<T>> {
    let cov = batch.empirical_covariance();
    let eig = symmetric_eigen(&cov)?;
    let rank = batch.n().min(batch.dim());
    let values = clamp_eigenvalues(&eig.values)?;
    let basis = eig.vectors.slice(s![.., ..rank]).t().to_owned();
    Ok(PcaFit {
        lambda_hat: values[..rank].to_vec(),
        basis,
        n: batch.n(),
        path: FitPath::Direct,
    })
}

/// Eigendecomposition inside the row space of the batch. An orthonormal basis
/// `Q` (`r x D`, `r <= n`) of `span{X_i}` is built by two-pass Gram-Schmidt; the
/// `r x r` compression `Q Sigma_hat Q^T = (X Q^T)^T (X Q^T) / n` has the nonzero
/// spectrum of the Gram matrix `X X^T / n`, and its eigenvectors `W` map back as
/// `W^T Q`. Unlike `X^T v / sqrt(n mu)` this keeps small-eigenvalue directions
/// accurate.
pub fn fit_gram<T: Scalar>(batch: &SampleBatch<T>) -> Result<PcaFit<T>> {
    let x = batch.coords();
    let n = batch.n();
    let dim = batch.dim();
    let nf = T::from_usize_lossy(n);
    let rank = n.min(dim);

    let largest = x
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(T::zero(), T::max);
    let drop_below = T::rel_tol(0.0) * largest;
    let mut q = Array2::<T>::zeros((rank, dim));
    let mut r = 0;
    for row in x.rows() {
        if r == rank {
            break;
        }
        let mut v = row.to_owned();
        for _ in 0..2 {
            for k in 0..r {
                let dot = v.dot(&q.row(k));
                v.scaled_add(-dot, &q.row(k));
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > drop_below {
            q.row_mut(r).assign(&v.mapv(|e| e / norm));
            r += 1;
        }
    }

    let coeffs = x.dot(&q.slice(s![..r, ..]).t()); // n x r
    let mut m = coeffs.t().dot(&coeffs);
    m.mapv_inplace(|v| v / nf);
    for i in 0..r {
        for j in i + 1..r {
            let v = m[[i, j]];
            m[[j, i]] = v;
        }
    }
    let eig = symmetric_eigen(&m)?;
    let mut values = clamp_eigenvalues(&eig.values)?;
    values.resize(rank, T::zero());
    let mut basis = Array2::<T>::zeros((rank, dim));
    basis
        .slice_mut(s![..r, ..])
        .assign(&eig.vectors.t().dot(&q.slice(s![..r, ..])));
    orthonormalize_rows(&mut basis, |i| i < r);
    Ok(PcaFit {
        lambda_hat: values,
        basis,
        n,
        path: FitPath::Gram,
    })
}

fn clamp_eigenvalues<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    let scale = values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let floor = -T::rel_tol(NEGATIVE_EIGENVALUE_TOLERANCE) * scale;
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| **v < floor) {
        return Err(Error::Numeric {
            stage: "pca",
            detail: format!(
                "covariance eigenvalue {} = {:e} is negative beyond round-off (largest {:e})",
                i + 1,
                v.as_f64(),
                scale.as_f64()
            ),
        });
    }
    Ok(values.iter().map(|v| v.max(T::zero())).collect())
}

/// Re-orthonormalizes the rows of `basis` in place (two Gram–Schmidt passes).
/// Rows with `keep(i) == false` are replaced by completions: the coordinate
/// axis with the largest component orthogonal to all previous rows.
fn orthonormalize_rows<T: Scalar>(basis: &mut Array2<T>, keep: impl Fn(usize) -> bool) {
    let (rows, dim) = basis.dim();
    for i in 0..rows {
        if !keep(i) {
            let prev = basis.slice(s![..i, ..]);
            let mut best = (T::lit(-1.0), 0usize);
            for axis in 0..dim {
                let captured: T = prev.column(axis).iter().map(|x| *x * *x).sum();
                let residual = T::one() - captured;
                if residual > best.0 {
                    best = (residual, axis);
                }
            }
            let mut row = basis.row_mut(i);
            row.fill(T::zero());
            row[best.1] = T::one();
        }
        for _ in 0..2 {
            for k in 0..i {
                let dot: T = basis.row(i).dot(&basis.row(k));
                let prev = basis.row(k).to_owned();
                basis.row_mut(i).scaled_add(-dot, &prev);
            }
            let norm = basis.row(i).dot(&basis.row(i)).sqrt();
            basis.row_mut(i).mapv_inplace(|x| x / norm);
        }
    }
}

/// `R(P_hat) = tr(Sigma (I - P_hat)) = sum_j lambda_j (1 - sum_{i<=d} basis[i][j]^2)`.
pub fn reconstruction_error<T: Scalar>(
    model: &SpectralModel<T>,
    fit: &PcaFit<T>,
    d: usize,
) -> Result<T> {
    if model.dim() != fit.dim() {
        return Err(Error::param(
            "fit",
            format!(
                "fit dimension {} differs from model dimension {}",
                fit.dim(),
                model.dim()
            ),
        ));
    }
    let weights = fit.projector_diagonal(d)?;
    let err = compensated_sum(
        model
            .eigenvalues()
            .iter()
            .zip(&weights)
            .rev()
            .map(|(l, w)| *l * (T::one() - *w)),
    );
    Ok(err.max(T::zero()))
}

/// `R_n(P) = n^{-1} sum_i ||X_i - P X_i||^2` for the projector onto the first
/// `d` rows of `basis` (which must be orthonormal).
pub fn empirical_error_of_basis<T: Scalar>(batch: &SampleBatch<T>, basis: ArrayView2<'_, T>) -> T {
    let x = batch.coords();
    let n = T::from_usize_lossy(batch.n());
    if basis.nrows() == 0 {
        return batch.mean_squared_norm();
    }
    let scores = x.dot(&basis.t()); // n x d
    let resid = x - &scores.dot(&basis);
    resid.iter().map(|r| *r * *r).sum::<T>() / n
}

/// `R_n(P_hat_{<=d})`; equals `sum_{k>d} lambda_hat_k` when `fit` came from `batch`.
pub fn empirical_reconstruction_error<T: Scalar>(
    batch: &SampleBatch<T>,
    fit: &PcaFit<T>,
    d: usize,
) -> Result<T> {
    fit.check_rank(d)?;
    if batch.dim() != fit.dim() {
        return Err(Error::param("fit", "fit and batch dimensions differ"));
    }
    Ok(empirical_error_of_basis(
        batch,
        fit.basis.slice(s![..d, ..]),
    ))
}

/// `R_n(P_{<=d}) = n^{-1} sum_i sum_{j>d} X_ij^2`: the empirical error of the
/// population-optimal projector.
pub fn empirical_error_of_population_projector<T: Scalar>(
    batch: &SampleBatch<T>,
    d: usize,
) -> Result<T> {
    if d > batch.dim() {
        return Err(Error::Range {
            what: "d",
            value: d,
            allowed: format!("0..={}", batch.dim()),
        });
    }
    let n = T::from_usize_lossy(batch.n());
    let tail = batch.coords().slice(s![.., d..]);
    Ok(tail.iter().map(|x| *x * *x).sum::<T>() / n)
}

/// Perturbation quantities of one batch relative to the population model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationStats<T> {
    /// `|| S_{<=d'} (Sigma - Sigma_hat) P_{>d'} ||_2^2`
    pub cross_hs_sq: T,
    /// `|| S_{<=d'} (Sigma - Sigma_hat) S_{<=d'} ||_inf`
    pub inner_op: T,
    /// `lambda_hat_{d+1}`
    pub lambda_hat_dplus1: T,
}

pub fn perturbation_stats<T: Scalar>(
    model: &SpectralModel<T>,
    batch: &SampleBatch<T>,
    fit: &PcaFit<T>,
    d_prime: usize,
    d: usize,
) -> Result<PerturbationStats<T>> {
    // validates (d', d) and the gap
    model.weighted_operator_stats(d_prime, d)?;
    if batch.dim() != model.dim() {
        return Err(Error::param("batch", "batch and model dimensions differ"));
    }
    let mu = model.lambda(d + 1);
    let weights: Vec<T> = (1..=d_prime).map(|j| model.lambda(j) - mu).collect();
    let x = batch.coords();
    let n = T::from_usize_lossy(batch.n());
    // rows j <= d' of Sigma_hat: (X[:, :d'])^T X / n
    let mut rows = x.slice(s![.., ..d_prime]).t().dot(x);
    rows.mapv_inplace(|v| v / n);

    let cross_hs_sq = compensated_sum(
        rows.outer_iter()
            .zip(&weights)
            .map(|(row, w)| row.slice(s![d_prime..]).iter().map(|v| *v * *v).sum::<T>() / *w),
    );

    let inner = Array2::from_shape_fn((d_prime, d_prime), |(j, k)| {
        let delta = if j == k {
            model.lambda(j + 1)
        } else {
            T::zero()
        };
        (delta - rows[[j, k]]) / (weights[j] * weights[k]).sqrt()
    });
    let inner = (&inner + &inner.t()).mapv(|v| v / T::lit(2.0));
    let inner_op = symmetric_spectral_norm(&inner)?;

    Ok(PerturbationStats {
        cross_hs_sq,
        inner_op,
        lambda_hat_dplus1: fit.lambda_hat_at(d + 1),
    })
}

/// Indicator of `{inner_op <= 1/4} and {lambda_hat_{d+1} - lambda_{d+1} <= (lambda_{d'} - lambda_{d+1}) / 2}`.
pub fn event_indicator<T: Scalar>(
    stats: &PerturbationStats<T>,
    model: &SpectralModel<T>,
    d_prime: usize,
    d: usize,
) -> bool {
    let mu = model.lambda(d + 1);
    let half_gap = (model.lambda(d_prime) - mu) / T::lit(2.0);
    stats.inner_op <= T::lit(0.25) && stats.lambda_hat_dplus1 - mu <= half_gap
}
