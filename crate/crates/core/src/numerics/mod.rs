//! Small dense kernels for `d x d` symmetric matrices (`d` is the parameter
//! dimension, typically 2 to 10) and the chi-square quantile.

mod special;

pub use special::{chi2_cdf, chi2_quantile, chi2_sf, ln_gamma, reg_gamma_lower, reg_gamma_upper};

use serde::{Deserialize, Serialize};

use crate::arx::RegressorSequence;
use crate::error::{Result, SpsError};

/// Eigenvalues below `ZERO_EIG_REL * max(1, lambda_max)` are treated as zero.
pub const ZERO_EIG_REL: f64 = 1e-12;
/// Eigenvalues below `-NEG_EIG_REL * max(1, lambda_max)` make a matrix non-PSD.
pub const NEG_EIG_REL: f64 = 1e-10;

/// Dense symmetric matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    /// Builds a matrix from row-major entries and symmetrizes it as `(A + A') / 2`.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(SpsError::Domain(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let mut m = Self { dim, entries };
        m.symmetrize();
        Ok(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.entries[i * values.len() + i] = v;
        }
        m
    }

    /// `(1/n) sum_t x_t x_t'` over the rows of `rows`.
    pub fn outer_mean(rows: &RegressorSequence) -> Self {
        let d = rows.dim();
        let mut acc = vec![0.0; d * d];
        for row in rows.rows() {
            accumulate_outer(&mut acc, row);
        }
        Self::from_upper_sum(d, acc, rows.len())
    }

    /// Finalizes an upper-triangle accumulator filled by [`accumulate_outer`].
    pub(crate) fn from_upper_sum(dim: usize, mut acc: Vec<f64>, n: usize) -> Self {
        let scale = 1.0 / n as f64;
        for i in 0..dim {
            for j in i..dim {
                let v = acc[i * dim + j] * scale;
                acc[i * dim + j] = v;
                acc[j * dim + i] = v;
            }
        }
        Self { dim, entries: acc }
    }

    fn symmetrize(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in (i + 1)..d {
                let v = 0.5 * (self.entries[i * d + j] + self.entries[j * d + i]);
                self.entries[i * d + j] = v;
                self.entries[j * d + i] = v;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| crate::arx::dot(&self.entries[i * d..(i + 1) * d], x))
            .collect()
    }

    /// `x' M x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        crate::arx::dot(x, &self.mul_vec(x))
    }

    pub fn matmul(&self, other: &SymMatrix) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.entries[i * d + k];
                for j in 0..d {
                    out[i * d + j] += a * other.entries[k * d + j];
                }
            }
        }
        out
    }

    /// Eigen-decomposition by cyclic Jacobi rotations.
    pub fn eigen(&self) -> SymEigen {
        jacobi_eigen(self)
    }
}

/// Adds `x x'` to the upper triangle of a row-major accumulator.
#[inline]
pub(crate) fn accumulate_outer(acc: &mut [f64], x: &[f64]) {
    let d = x.len();
    for i in 0..d {
        let xi = x[i];
        for j in i..d {
            acc[i * d + j] += xi * x[j];
        }
    }
}

/// Eigenvalues (ascending) and eigenvectors (columns of a row-major matrix).
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

fn jacobi_eigen(m: &SymMatrix) -> SymEigen {
    let d = m.dim;
    let mut a = m.entries.clone();
    let mut v = SymMatrix::identity(d).entries;
    for _sweep in 0..100 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..d {
            diag += a[i * d + i] * a[i * d + i];
            for j in (i + 1)..d {
                off += a[i * d + j] * a[i * d + j];
            }
        }
        if off == 0.0 || off <= 1e-32 * diag {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[i * d + i].total_cmp(&a[j * d + j]));
    let values = order.iter().map(|&i| a[i * d + i]).collect();
    let mut vectors = vec![0.0; d * d];
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..d {
            vectors[k * d + new_col] = v[k * d + old_col];
        }
    }
    SymEigen { values, vectors }
}

/// Inverse (or pseudoinverse) of the principal square root of a PSD matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdFactor {
    pub dim: usize,
    /// Row-major `M^{-1/2}` (pseudoinverse on the null space).
    pub inv_sqrt: Vec<f64>,
    pub rank: usize,
    pub min_eig: f64,
    pub max_eig: f64,
}

impl PsdFactor {
    pub fn is_full_rank(&self) -> bool {
        self.rank == self.dim
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| crate::arx::dot(&self.inv_sqrt[i * d..(i + 1) * d], x))
            .collect()
    }

    /// `M^{-1/2} x` written into `out`.
    #[inline]
    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            *o = crate::arx::dot(&self.inv_sqrt[i * d..(i + 1) * d], x);
        }
    }
}

pub fn psd_inv_sqrt(m: &SymMatrix) -> Result<PsdFactor> {
    let d = m.dim;
    let eig = m.eigen();
    let min_eig = eig.values[0];
    let max_eig = eig.values[d - 1];
    let scale = max_eig.max(1.0);
    if !min_eig.is_finite() || !max_eig.is_finite() || min_eig < -NEG_EIG_REL * scale {
        return Err(SpsError::NotPsd { min_eig, max_eig });
    }
    let cutoff = ZERO_EIG_REL * scale;
    let mut inv_sqrt = vec![0.0; d * d];
    let mut rank = 0;
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda < cutoff {
            continue;
        }
        rank += 1;
        let w = 1.0 / lambda.sqrt();
        for i in 0..d {
            let vik = eig.vectors[i * d + k] * w;
            for j in 0..d {
                inv_sqrt[i * d + j] += vik * eig.vectors[j * d + k];
            }
        }
    }
    // exact symmetry
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (inv_sqrt[i * d + j] + inv_sqrt[j * d + i]);
            inv_sqrt[i * d + j] = v;
            inv_sqrt[j * d + i] = v;
        }
    }
    Ok(PsdFactor {
        dim: d,
        inv_sqrt,
        rank,
        min_eig,
        max_eig,
    })
}

/// Conditioning report of a least-squares solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsReport {
    pub rank: usize,
    pub dim: usize,
    pub degenerate: bool,
    pub min_eig: f64,
    pub max_eig: f64,
}

/// Least-squares solution of `y_t ~ phi_t' theta` via the normal equations.
///
/// A rank-deficient `sum phi phi'` yields the minimum-norm solution with
/// `degenerate` set.
pub fn solve_least_squares(regressors: &RegressorSequence, y: &[f64]) -> Result<(Vec<f64>, LsReport)> {
    let n = regressors.len();
    if n == 0 || y.len() != n {
        return Err(SpsError::Domain(format!(
            "least squares needs n >= 1 matching samples (regressors {n}, outputs {})",
            y.len()
        )));
    }
    let d = regressors.dim();
    let r = SymMatrix::outer_mean(regressors);
    let mut rhs = vec![0.0; d];
    for (row, &yt) in regressors.rows().zip(y) {
        for (acc, &x) in rhs.iter_mut().zip(row) {
            *acc += x * yt;
        }
    }
    let inv_n = 1.0 / n as f64;
    rhs.iter_mut().for_each(|v| *v *= inv_n);
    let factor = psd_inv_sqrt(&r)?;
    let theta = factor.apply(&factor.apply(&rhs));
    let report = LsReport {
        rank: factor.rank,
        dim: d,
        degenerate: factor.rank < d,
        min_eig: factor.min_eig,
        max_eig: factor.max_eig,
    };
    Ok((theta, report))
}
