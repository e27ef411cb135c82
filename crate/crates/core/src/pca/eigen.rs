//! Dense symmetric eigensolver: Householder reduction to tridiagonal form
//! followed by the implicit QL algorithm with Wilkinson-style shifts.
//!
//! Adapted from the EISPACK `tred2`/`tql2` pair as laid out in JAMA.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// QL sweeps allowed per eigenvalue before giving up.
const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Eigenpairs of a symmetric matrix, eigenvalues non-increasing.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: Array2<T>,
}

/// Row-major square scratch matrix indexed as `m[(row, col)]`.
struct Square<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Copy> std::ops::Index<(usize, usize)> for Square<T> {
    type Output = T;
    #[inline(always)]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.n + c]
    }
}

impl<T: Copy> std::ops::IndexMut<(usize, usize)> for Square<T> {
    #[inline(always)]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.n + c]
    }
}

/// Full eigendecomposition of the symmetric matrix `a`. Only symmetry of the
/// input is assumed; it is not checked.
pub fn symmetric_eigen<T: Scalar>(a: &Array2<T>) -> Result<SymmetricEigen<T>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Numeric {
            stage: "eigen",
            detail: format!("matrix is {}x{}, not square", a.nrows(), a.ncols()),
        });
    }
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Vec::new(),
            vectors: Array2::zeros((0, 0)),
        });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric {
            stage: "eigen",
            detail: "matrix has non-finite entries".into(),
        });
    }
    let mut v = Square {
        n,
        data: a.iter().copied().collect(),
    };
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    // descending, ties broken by index
    order.sort_by(|&i, &j| {
        d[j].partial_cmp(&d[i])
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors })
}

/// Largest absolute eigenvalue, i.e. the spectral norm of a symmetric matrix.
pub fn symmetric_spectral_norm<T: Scalar>(a: &Array2<T>) -> Result<T> {
    let eig = symmetric_eigen(a)?;
    Ok(eig.values.iter().fold(T::zero(), |acc, x| acc.max(x.abs())))
}

fn tred2<T: Scalar>(v: &mut Square<T>, d: &mut [T], e: &mut [T]) {
    let n = v.n;
    let zero = T::zero();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for k in 0..i {
            scale = scale + d[k].abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = zero;
                v[(j, i)] = zero;
            }
        } else {
            for k in 0..i {
                d[k] = d[k] / scale;
                h = h + d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = zero;
            }

            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g = g + v[(k, j)] * d[k];
                    e[k] = e[k] + v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = zero;
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] = v[(k, j)] - (f * e[k] + g * d[k]);
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = zero;
            }
        }
        d[i] = h;
    }

    // accumulate transformations
    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = T::one();
        let h = d[i + 1];
        if h != zero {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = zero;
                for k in 0..=i {
                    g = g + v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] = v[(k, j)] - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = zero;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = zero;
    }
    v[(n - 1, n - 1)] = T::one();
    e[0] = zero;
}

fn tql2<T: Scalar>(v: &mut Square<T>, d: &mut [T], e: &mut [T]) -> Result<()> {
    let n = v.n;
    let zero = T::zero();
    let one = T::one();
    let two = T::lit(2.0);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;

    let mut f = zero;
    let mut tst1 = zero;
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }

        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_SWEEPS_PER_EIGENVALUE {
                    return Err(Error::Numeric {
                        stage: "eigen",
                        detail: format!(
                            "QL iteration did not converge for eigenvalue {l} of {n}: \
                             off-diagonal {:e} vs threshold {:e}",
                            e[l].abs().as_f64(),
                            (eps * tst1).as_f64()
                        ),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let row = k * n;
                        h = v.data[row + i + 1];
                        let vi = v.data[row + i];
                        v.data[row + i + 1] = s * vi + c * h;
                        v.data[row + i] = c * vi - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = zero;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn check_decomposition(a: &Array2<f64>, tol: f64) {
        let n = a.nrows();
        let eig = symmetric_eigen(a).unwrap();
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        let gram = eig.vectors.t().dot(&eig.vectors);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram[[i, j]] - want).abs() < tol,
                    "orthonormality ({i},{j})"
                );
            }
        }
        let scale = a.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (i, col) in eig.vectors.columns().into_iter().enumerate() {
            let av = a.dot(&col);
            for k in 0..n {
                assert!((av[k] - eig.values[i] * col[k]).abs() < tol * scale * n as f64);
            }
        }
    }

    #[test]
    fn two_by_two() {
        let a = array![[3.0f64, 1.0], [1.0, 3.0]];
        let eig = symmetric_eigen(&a).unwrap();
        assert!((eig.values[0] - 4.0).abs() < 1e-14);
        assert!((eig.values[1] - 2.0).abs() < 1e-14);
        check_decomposition(&a, 1e-14);
    }

    #[test]
    fn diagonal_and_degenerate_inputs() {
        let a = Array2::from_diag(&ndarray::arr1(&[0.1, 3.0, 2.0, 2.0]));
        let eig = symmetric_eigen(&a).unwrap();
        assert_eq!(eig.values, vec![3.0, 2.0, 2.0, 0.1]);
        check_decomposition(&a, 1e-14);
        let z = Array2::<f64>::zeros((5, 5));
        let eig = symmetric_eigen(&z).unwrap();
        assert!(eig.values.iter().all(|&x| x == 0.0));
        check_decomposition(&z, 1e-14);
        let one = array![[7.5]];
        assert_eq!(symmetric_eigen(&one).unwrap().values, vec![7.5]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(symmetric_eigen(&Array2::<f64>::zeros((2, 3))).is_err());
        assert!(symmetric_eigen(&array![[f64::NAN]]).is_err());
    }

    #[test]
    fn spectral_norm_picks_largest_magnitude() {
        let a = array![[-5.0f64, 0.0], [0.0, 1.0]];
        assert!((symmetric_spectral_norm(&a).unwrap() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn f32_solver() {
        let a = array![[2.0f32, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]];
        let eig = symmetric_eigen(&a).unwrap();
        let want = [2.0 + 2f32.sqrt(), 2.0, 2.0 - 2f32.sqrt()];
        for (g, w) in eig.values.iter().zip(want) {
            assert!((g - w).abs() < 1e-5);
        }
    }

    fn symmetric(n: usize) -> impl Strategy<Value = Array2<f64>> {
        prop::collection::vec(-10.0f64..10.0, n * n).prop_map(move |v| {
            let m = Array2::from_shape_vec((n, n), v).unwrap();
            (&m + &m.t()) * 0.5
        })
    }

    proptest! {
        #[test]
        fn random_symmetric_matrices(a in (1usize..25).prop_flat_map(symmetric)) {
            check_decomposition(&a, 1e-11);
        }

        #[test]
        fn matches_nalgebra(a in (1usize..20).prop_flat_map(symmetric)) {
            let n = a.nrows();
            let na = nalgebra::DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
            let mut oracle: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
            oracle.sort_by(|x, y| y.partial_cmp(x).unwrap());
            let ours = symmetric_eigen(&a).unwrap().values;
            for (x, y) in ours.iter().zip(&oracle) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
