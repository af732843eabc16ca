//! Small dense linear-algebra helpers built on `nalgebra`.
//!
//! Everything here works on symmetric matrices through the symmetric
//! eigendecomposition, which is all the affine-invariant SPD geometry needs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this are clamped before `sqrt`/`ln`.
pub const EIG_CLAMP: f64 = 1e-12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Applies a scalar function to the eigenvalues of a symmetric matrix.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(f);
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&vals) * q.transpose();
    out = symmetrize(&out);
    out
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(symmetrize(m)).eigenvalues
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).min()
}

pub fn sym_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, f64::exp)
}

pub fn sym_log(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |v| v.max(EIG_CLAMP).ln())
}

pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |v| v.max(EIG_CLAMP).sqrt())
}

pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |v| 1.0 / v.max(EIG_CLAMP).sqrt())
}

/// Square root and inverse square root from one eigendecomposition.
pub fn sym_sqrt_pair(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let q = &eig.eigenvectors;
    let s = eig.eigenvalues.map(|v| v.max(EIG_CLAMP).sqrt());
    let sqrt = symmetrize(&(q * DMatrix::from_diagonal(&s) * q.transpose()));
    let inv = symmetrize(&(q * DMatrix::from_diagonal(&s.map(|v| 1.0 / v)) * q.transpose()));
    (sqrt, inv)
}

/// `a * s * a`, symmetrized. Used for congruences by symmetric `a`.
pub fn congruence(a: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(a * s * a))
}

/// `a * s * a^T`, symmetrized.
pub fn congruence_t(a: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(a * s * a.transpose()))
}

/// Largest absolute asymmetry, relative to the largest entry (floor 1).
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Length of the upper-triangle vectorization of a `d x d` symmetric matrix.
pub fn sym_vec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Coordinates of a symmetric matrix in the orthonormal (Frobenius) basis:
/// upper triangle row-major, off-diagonal entries scaled by `sqrt(2)`.
pub fn sym_to_orthonormal_vec(m: &DMatrix<f64>) -> DVector<f64> {
    let d = m.nrows();
    let mut out = DVector::zeros(sym_vec_len(d));
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            out[k] = if i == j {
                m[(i, i)]
            } else {
                std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)])
            };
            k += 1;
        }
    }
    out
}

pub fn orthonormal_vec_to_sym(v: &DVector<f64>, d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            if i == j {
                m[(i, i)] = v[k];
            } else {
                let x = v[k] * std::f64::consts::FRAC_1_SQRT_2;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
            k += 1;
        }
    }
    m
}

/// Unscaled upper triangle, row-major (the point-file layout).
pub fn sym_to_upper(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(sym_vec_len(d));
    for i in 0..d {
        for j in i..d {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn upper_to_sym(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

/// Infers `d` from an upper-triangle length `d(d+1)/2`.
pub fn side_from_sym_len(len: usize) -> Option<usize> {
    (1..=64).find(|&d| sym_vec_len(d) == len)
}

/// Multivariate normal log-density with a precomputed Cholesky factor.
#[derive(Clone, Debug)]
pub struct GaussianLogDensity {
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianLogDensity {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let dim = cov.nrows();
        let chol = nalgebra::Cholesky::new(symmetrize(cov))
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            chol_l: l,
            log_norm,
        })
    }

    /// `-(1/2) (D ln 2pi + ln det cov)`.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn mahalanobis_sq(&self, centered: &DVector<f64>) -> f64 {
        let z = self
            .chol_l
            .solve_lower_triangular(centered)
            .expect("cholesky factor has a positive diagonal");
        z.norm_squared()
    }

    pub fn log_density(&self, centered: &DVector<f64>) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(centered)
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.chol_l
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
