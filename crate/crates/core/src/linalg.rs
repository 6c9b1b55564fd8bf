//! Dense statistics and symmetric eigen kernels shared by the rest of the crate.
//!
//! All second moments use the biased `1/N` convention: a batch of `N` samples
//! is treated as the whole population, the same way mini-batch statistics are
//! formed during normalization.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{IsoError, Result};

/// Relative asymmetry tolerated by [`sym_eigendecompose`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Conditioning threshold for [`inverse_sqrt`]: the smallest eigenvalue must
/// exceed `CONDITION_KAPPA * largest`.
pub const CONDITION_KAPPA: f64 = 1e-10;

/// `N x d` matrix of embeddings, one sample per row.
///
/// Construction guarantees `N >= 1`, `d >= 1`, and that every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: DMatrix<f64>,
}

impl EmbeddingMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(IsoError::EmptyMatrix {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        // Column-major storage: report the first offender in row-major order.
        let mut first: Option<(usize, usize)> = None;
        for (idx, v) in data.iter().enumerate() {
            if !v.is_finite() {
                let (row, col) = (idx % data.nrows(), idx / data.nrows());
                if first.is_none_or(|(r, c)| (row, col) < (r, c)) {
                    first = Some((row, col));
                }
            }
        }
        if let Some((row, col)) = first {
            return Err(IsoError::NonFinite { row, col });
        }
        Ok(Self { data })
    }

    /// Builds from a row-major slice of `n_samples * dim` values.
    pub fn from_row_slice(n_samples: usize, dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n_samples * dim {
            return Err(IsoError::DimensionMismatch {
                expected: n_samples * dim,
                found: values.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n_samples, dim, values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(IsoError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::from_row_slice(rows.len(), dim, &flat)
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[(row, col)]
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for r in 0..self.n_samples() {
            out.extend(self.data.row(r).iter().copied());
        }
        out
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.data * factor)
    }

    /// Adds `offset` to every sample.
    pub fn shifted(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.dim() {
            return Err(IsoError::DimensionMismatch {
                expected: self.dim(),
                found: offset.len(),
            });
        }
        let mut data = self.data.clone();
        for (j, mut col) in data.column_iter_mut().enumerate() {
            col.add_scalar_mut(offset[j]);
        }
        Self::new(data)
    }
}

/// First and second moments of an embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub correlation: DMatrix<f64>,
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order and
/// eigenvectors stored as the columns of `eigenvectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The first `k` eigenvectors as a `d x k` matrix.
    pub fn top_vectors(&self, k: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, k.min(self.dim())).into_owned()
    }

    /// `V diag(w) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues);
        scaled * self.eigenvectors.transpose()
    }
}

/// Column means. A constant column yields its value exactly.
pub fn column_means(h: &EmbeddingMatrix) -> DVector<f64> {
    let n = h.n_samples() as f64;
    DVector::from_iterator(
        h.dim(),
        h.as_matrix().column_iter().map(|col| {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                first
            } else {
                col.iter().sum::<f64>() / n
            }
        }),
    )
}

/// Mean-centered copy of `h` together with the column means.
pub fn center_columns(h: &EmbeddingMatrix) -> (DMatrix<f64>, DVector<f64>) {
    let mean = column_means(h);
    let mut centered = h.as_matrix().clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    (centered, mean)
}

/// `X^T X` for a column-major `N x d` matrix, exactly symmetric.
///
/// Each entry is an independent dot product, so the result does not depend
/// on how many threads rayon uses.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let d = x.ncols();
    let rows: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|i| {
            let ci = x.column(i);
            (i..d).map(|j| ci.dot(&x.column(j))).collect()
        })
        .collect();
    let mut out = DMatrix::zeros(d, d);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Correlation from a covariance and a standard-deviation vector.
///
/// The diagonal is fixed at 1, pairs involving a zero-variance dimension are
/// 0, and off-diagonal entries are clamped to `[-1, 1]` (relevant when `std`
/// is not exactly `sqrt(diag(cov))`, as with moving estimates).
pub fn correlation_from(cov: &DMatrix<f64>, std: &DVector<f64>) -> DMatrix<f64> {
    let d = std.len();
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            let denom = std[i] * std[j];
            if denom == 0.0 {
                0.0
            } else {
                (cov[(i, j)] / denom).clamp(-1.0, 1.0)
            }
        }
    })
}

pub fn compute_moments(h: &EmbeddingMatrix) -> MomentEstimates {
    let (centered, mean) = center_columns(h);
    let covariance = gram(&centered) / h.n_samples() as f64;
    let std = covariance.diagonal().map(f64::sqrt);
    let correlation = correlation_from(&covariance, &std);
    MomentEstimates {
        mean,
        std,
        covariance,
        correlation,
    }
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(IsoError::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Err(IsoError::EmptyMatrix { rows: 0, cols: 0 });
    }
    if let Some(idx) = a.iter().position(|v| !v.is_finite()) {
        return Err(IsoError::NonFinite {
            row: idx % a.nrows(),
            col: idx / a.nrows(),
        });
    }
    Ok(())
}

/// Rejects matrices whose worst asymmetry exceeds `tol` relative to the
/// largest entry.
pub fn check_symmetric(a: &DMatrix<f64>, tol: f64) -> Result<()> {
    check_square(a)?;
    let scale = a.amax();
    let d = a.nrows();
    let mut worst = (0, 0, 0.0f64);
    for i in 0..d {
        for j in (i + 1)..d {
            let diff = (a[(i, j)] - a[(j, i)]).abs();
            if diff > worst.2 {
                worst = (i, j, diff);
            }
        }
    }
    if worst.2 > tol * scale {
        return Err(IsoError::NotSymmetric {
            row: worst.0,
            col: worst.1,
            diff: worst.2,
        });
    }
    Ok(())
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
///
/// Eigenvector signs are normalized so that the largest-magnitude component
/// of each vector is positive, which makes the output deterministic.
pub fn sym_eigendecompose(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    check_symmetric(a, SYMMETRY_TOL)?;
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let d = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));

    let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        eigenvectors.set_column(dst, &v);
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn spectral_map(eig: &EigenDecomposition, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let v = &eig.eigenvectors;
    let scaled = v * DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    let out = scaled * v.transpose();
    (&out + out.transpose()) * 0.5
}

/// `A^{-1/2}` for a symmetric positive-definite `A`.
///
/// Fails with [`IsoError::IllConditioned`] unless the smallest eigenvalue
/// exceeds [`CONDITION_KAPPA`] times the largest.
pub fn inverse_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigendecompose(a)?;
    let largest = eig.eigenvalues[0];
    let smallest = eig.eigenvalues[eig.dim() - 1];
    if !(largest > 0.0 && smallest > CONDITION_KAPPA * largest) {
        return Err(IsoError::IllConditioned { smallest, largest });
    }
    Ok(spectral_map(&eig, |w| 1.0 / w.sqrt()))
}

/// Symmetric square root of a positive semi-definite matrix; eigenvalues
/// below zero (rounding noise) are treated as zero.
pub fn psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigendecompose(a)?;
    Ok(spectral_map(&eig, |w| w.max(0.0).sqrt()))
}
