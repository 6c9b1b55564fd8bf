//! Whitening, batch normalization and the correlation-aware IsoBN transform.

mod cache;
mod isobn;

pub use cache::{MomentCache, CACHE_MAGIC, CACHE_VERSION};
pub use isobn::{
    compute_scaling, isobn_infer, isobn_step, isobn_train, IsoBnConfig, Mode, ScalingVector,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{IsoError, Result};
use crate::linalg::{center_columns, compute_moments, gram, inverse_sqrt, EmbeddingMatrix, MomentEstimates};

/// ZCA whitening: `(h - mu) * Sigma^{-1/2}`.
///
/// Fails with [`IsoError::IllConditioned`] when the sample covariance is
/// singular or nearly so, which is the usual state of affairs for raw
/// transformer embeddings.
pub fn whiten(h: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let (centered, _) = center_columns(h);
    let cov = gram(&centered) / h.n_samples() as f64;
    let w = inverse_sqrt(&cov)?;
    EmbeddingMatrix::new(centered * w)
}

/// Per-dimension standardization to zero mean and unit (1/N) variance.
/// Zero-variance columns map to zeros.
pub fn batch_normalize(h: &EmbeddingMatrix) -> EmbeddingMatrix {
    let moments = compute_moments(h);
    let ones = DVector::from_element(h.dim(), 1.0);
    scale_centered(h, &moments, &ones)
}

/// Soft group sizes `gamma_i = sum_j rho_ij^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSizeVector(pub DVector<f64>);

impl GroupSizeVector {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn compute_gamma(rho: &DMatrix<f64>) -> Result<GroupSizeVector> {
    if rho.nrows() != rho.ncols() {
        return Err(IsoError::DimensionMismatch {
            expected: rho.nrows(),
            found: rho.ncols(),
        });
    }
    Ok(GroupSizeVector(DVector::from_iterator(
        rho.nrows(),
        rho.row_iter().map(|row| row.iter().map(|r| r * r).sum()),
    )))
}

/// Mean-subtracting IsoBN: column `i` becomes `(h_i - mu_i) / (sigma_i * gamma_i)`.
///
/// A dimension with `sigma_i * gamma_i == 0` maps to zeros, as in
/// [`batch_normalize`].
pub fn isobn_core_transform(
    h: &EmbeddingMatrix,
    moments: &MomentEstimates,
    gamma: &GroupSizeVector,
) -> Result<EmbeddingMatrix> {
    for len in [moments.mean.len(), moments.std.len(), gamma.len()] {
        if len != h.dim() {
            return Err(IsoError::DimensionMismatch {
                expected: h.dim(),
                found: len,
            });
        }
    }
    Ok(scale_centered(h, moments, &gamma.0))
}

fn scale_centered(h: &EmbeddingMatrix, moments: &MomentEstimates, gamma: &DVector<f64>) -> EmbeddingMatrix {
    let mut out = h.as_matrix().clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let denom = moments.std[j] * gamma[j];
        if denom == 0.0 {
            col.fill(0.0);
        } else {
            let mu = moments.mean[j];
            col.apply(|v| *v = (*v - mu) / denom);
        }
    }
    EmbeddingMatrix::new(out).expect("scaling finite data by a nonzero factor stays finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, StdProfile, SyntheticSpec};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        EmbeddingMatrix::from_row_slice(n, d, &vals).unwrap()
    }

    fn sample_cov(h: &EmbeddingMatrix) -> DMatrix<f64> {
        // two-pass, written out by hand
        let (n, d) = (h.n_samples(), h.dim());
        let mean: Vec<f64> = (0..d)
            .map(|j| (0..n).map(|r| h.get(r, j)).sum::<f64>() / n as f64)
            .collect();
        DMatrix::from_fn(d, d, |i, j| {
            (0..n).map(|r| (h.get(r, i) - mean[i]) * (h.get(r, j) - mean[j])).sum::<f64>() / n as f64
        })
    }

    #[test]
    fn whiten_is_identity_on_white_input() {
        let h = whiten(&gaussian(300, 4, 1)).unwrap();
        let again = whiten(&h).unwrap();
        assert!((again.as_matrix() - h.as_matrix()).amax() <= 1e-8);
    }

    #[test]
    fn whiten_produces_identity_covariance() {
        let z = gaussian(512, 2, 7);
        let mix = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let root = crate::linalg::psd_sqrt(&mix).unwrap();
        let h = EmbeddingMatrix::new(z.as_matrix() * root).unwrap();
        let out = whiten(&h).unwrap();
        let cov = sample_cov(&out);
        assert!((cov - DMatrix::identity(2, 2)).amax() <= 1e-6);
    }

    #[test]
    fn whiten_rejects_duplicated_dimension() {
        let z = gaussian(64, 2, 2);
        let mut m = DMatrix::zeros(64, 3);
        m.set_column(0, &z.as_matrix().column(0));
        m.set_column(1, &z.as_matrix().column(1));
        m.set_column(2, &z.as_matrix().column(1));
        let h = EmbeddingMatrix::new(m).unwrap();
        assert!(matches!(whiten(&h), Err(IsoError::IllConditioned { .. })));
    }

    #[test]
    fn batch_normalize_small_cases() {
        let h = EmbeddingMatrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let out = batch_normalize(&h);
        assert_eq!(out.to_row_major(), vec![-1.0, 0.0, 1.0, 0.0]);

        let h = EmbeddingMatrix::from_rows(&[vec![5.0], vec![5.0], vec![5.0]]).unwrap();
        assert_eq!(batch_normalize(&h).to_row_major(), vec![0.0; 3]);
    }

    #[test]
    fn batch_normalize_standardizes_every_column() {
        let h = gaussian(256, 8, 11).scaled(3.5).unwrap().shifted(&[1.0; 8]).unwrap();
        let m = compute_moments(&batch_normalize(&h));
        for j in 0..8 {
            assert_abs_diff_eq!(m.mean[j], 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(m.std[j], 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn gamma_examples() {
        let g = compute_gamma(&DMatrix::identity(5, 5)).unwrap();
        assert_eq!(g.as_slice(), &[1.0; 5]);

        let mut blocks = DMatrix::zeros(4, 4);
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)] {
            blocks[(i, j)] = 1.0;
        }
        assert_eq!(compute_gamma(&blocks).unwrap().as_slice(), &[2.0; 4]);

        let half = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert_eq!(compute_gamma(&half).unwrap().as_slice(), &[1.25, 1.25]);
    }

    #[test]
    fn core_transform_with_unit_gamma_is_batch_norm() {
        let h = gaussian(100, 5, 5).scaled(2.0).unwrap();
        let m = compute_moments(&h);
        let ones = GroupSizeVector(DVector::from_element(5, 1.0));
        let a = isobn_core_transform(&h, &m, &ones).unwrap();
        let b = batch_normalize(&h);
        assert!((a.as_matrix() - b.as_matrix()).amax() <= 1e-12);
    }

    #[test]
    fn core_transform_on_duplicate_pair() {
        let z = gaussian(200, 1, 9);
        let col = z.as_matrix().column(0);
        let m0 = compute_moments(&z);
        // rescale so the std is exactly 2 (up to rounding)
        let scaled = (col.add_scalar(-m0.mean[0])) * (2.0 / m0.std[0]);
        let mut m = DMatrix::zeros(200, 2);
        m.set_column(0, &scaled);
        m.set_column(1, &scaled);
        let h = EmbeddingMatrix::new(m).unwrap();
        let moments = compute_moments(&h);
        let gamma = compute_gamma(&moments.correlation).unwrap();
        assert_abs_diff_eq!(gamma.0[0], 2.0, epsilon = 1e-12);
        let out = compute_moments(&isobn_core_transform(&h, &moments, &gamma).unwrap());
        assert_abs_diff_eq!(out.std[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.std[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn core_transform_scales_blocks_by_inverse_group_size() {
        let spec = SyntheticSpec {
            n_samples: 400,
            dim: 8,
            group_sizes: vec![3, 5],
            within_group_corr: 0.8,
            std_profile: StdProfile::Geometric { start: 2.0, ratio: 0.8 },
            seed: 21,
            ..SyntheticSpec::default()
        };
        let (h, _) = generate(&spec).unwrap();
        let moments = compute_moments(&h);
        let gamma = compute_gamma(&moments.correlation).unwrap();
        let out = compute_moments(&isobn_core_transform(&h, &moments, &gamma).unwrap());
        for j in 0..8 {
            assert_abs_diff_eq!(out.std[j], 1.0 / gamma.0[j], epsilon = 1e-10);
        }
    }
}
