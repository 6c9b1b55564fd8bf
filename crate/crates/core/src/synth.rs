//! Seeded Gaussian embeddings with planted correlation groups, a chosen
//! per-dimension scale profile and an optional two-class label signal.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{IsoError, Result};
use crate::linalg::{psd_sqrt, EmbeddingMatrix};

/// Target per-dimension standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StdProfile {
    Explicit(Vec<f64>),
    /// `start * ratio^i` for dimension `i`.
    Geometric { start: f64, ratio: f64 },
}

impl Default for StdProfile {
    fn default() -> Self {
        StdProfile::Geometric { start: 1.0, ratio: 1.0 }
    }
}

impl StdProfile {
    /// Checks the profile without materializing it. A geometric sequence is
    /// monotone, so its two endpoints bound every term.
    fn check(&self, dim: usize) -> Result<()> {
        match self {
            StdProfile::Explicit(_) => self.resolve(dim).map(|_| ()),
            StdProfile::Geometric { start, ratio } => {
                let last = i32::try_from(dim.saturating_sub(1)).map_err(|_| {
                    IsoError::InvalidArgument(format!("dimension {dim} too large for a geometric std profile"))
                })?;
                for (i, s) in [(0, *start), (dim - 1, start * ratio.powi(last))] {
                    if !(s.is_finite() && s > 0.0) {
                        return Err(IsoError::InvalidArgument(format!(
                            "std_profile[{i}] = {s} must be finite and positive"
                        )));
                    }
                }
                if !(ratio.is_finite() && *ratio > 0.0) {
                    return Err(IsoError::InvalidArgument(format!("std ratio {ratio} must be finite and positive")));
                }
                Ok(())
            }
        }
    }

    pub fn resolve(&self, dim: usize) -> Result<Vec<f64>> {
        let stds = match self {
            StdProfile::Explicit(v) => {
                if v.len() != dim {
                    return Err(IsoError::DimensionMismatch {
                        expected: dim,
                        found: v.len(),
                    });
                }
                v.clone()
            }
            StdProfile::Geometric { start, ratio } => {
                self.check(dim)?;
                (0..dim).map(|i| start * ratio.powi(i as i32)).collect()
            }
        };
        if let Some((i, s)) = stds.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s > 0.0)) {
            return Err(IsoError::InvalidArgument(format!(
                "std_profile[{i}] = {s} must be finite and positive"
            )));
        }
        Ok(stds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub dim: usize,
    /// Sizes of the correlated groups, laid out contiguously from dimension
    /// 0. Dimensions past the last group are independent.
    #[serde(default)]
    pub group_sizes: Vec<usize>,
    #[serde(default)]
    pub within_group_corr: f64,
    /// Flip the sign of every other member of a group, giving negative
    /// within-group correlations of the same magnitude.
    #[serde(default)]
    pub alternate_signs: bool,
    /// Unit standard deviations when omitted.
    #[serde(default)]
    pub std_profile: StdProfile,
    /// Labels are `1` where the sample projects positively onto this axis.
    #[serde(default)]
    pub label_axis: Option<Vec<f64>>,
    /// Probability of flipping each label.
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 256,
            dim: 8,
            group_sizes: Vec::new(),
            within_group_corr: 0.0,
            alternate_signs: false,
            std_profile: StdProfile::default(),
            label_axis: None,
            label_noise: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.dim == 0 {
            return Err(IsoError::EmptyMatrix {
                rows: self.n_samples,
                cols: self.dim,
            });
        }
        if self.n_samples.checked_mul(self.dim).is_none_or(|n| n > isize::MAX as usize / 8) {
            return Err(IsoError::InvalidArgument("n_samples * dim is too large".into()));
        }
        if self.group_sizes.contains(&0) {
            return Err(IsoError::InvalidArgument("group sizes must be positive".into()));
        }
        let grouped = self
            .group_sizes
            .iter()
            .try_fold(0usize, |acc, g| acc.checked_add(*g))
            .filter(|total| *total <= self.dim);
        if grouped.is_none() {
            return Err(IsoError::InvalidArgument(format!(
                "group sizes {:?} exceed dimension {}",
                self.group_sizes, self.dim
            )));
        }
        if !(0.0..=1.0).contains(&self.within_group_corr) {
            return Err(IsoError::InvalidArgument(format!(
                "within_group_corr must lie in [0, 1], got {}",
                self.within_group_corr
            )));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return Err(IsoError::InvalidArgument(format!(
                "label_noise must lie in [0, 1], got {}",
                self.label_noise
            )));
        }
        self.std_profile.check(self.dim)?;
        if let Some(axis) = &self.label_axis {
            if axis.len() != self.dim {
                return Err(IsoError::DimensionMismatch {
                    expected: self.dim,
                    found: axis.len(),
                });
            }
            if axis.iter().any(|v| !v.is_finite()) || axis.iter().all(|v| *v == 0.0) {
                return Err(IsoError::InvalidArgument(
                    "label_axis must be finite and nonzero".into(),
                ));
            }
        }
        Ok(())
    }

    fn signs(&self, len: usize) -> DVector<f64> {
        DVector::from_fn(len, |i, _| {
            if self.alternate_signs && i % 2 == 1 {
                -1.0
            } else {
                1.0
            }
        })
    }

    /// Correlation matrix the generator samples from.
    pub fn target_correlation(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let mut c = DMatrix::identity(self.dim, self.dim);
        let mut start = 0;
        for &g in &self.group_sizes {
            let s = self.signs(g);
            for i in 0..g {
                for j in 0..g {
                    if i != j {
                        c[(start + i, start + j)] = self.within_group_corr * s[i] * s[j];
                    }
                }
            }
            start += g;
        }
        Ok(c)
    }

    pub fn target_covariance(&self) -> Result<DMatrix<f64>> {
        let c = self.target_correlation()?;
        let d = DMatrix::from_diagonal(&DVector::from_vec(self.std_profile.resolve(self.dim)?));
        Ok(&d * c * &d)
    }
}

/// Draws the matrix (and labels when `label_axis` is set).
///
/// A within-group correlation of exactly 1 copies one latent column across
/// the group instead of sampling a singular Gaussian, so duplicated
/// dimensions are exact. In that mode the latent columns are also made
/// exactly uncorrelated with each other in-sample, so the sample correlation
/// is block-diagonal with blocks of ones.
pub fn generate(spec: &SyntheticSpec) -> Result<(EmbeddingMatrix, Option<Vec<usize>>)> {
    spec.validate()?;
    let (n, d) = (spec.n_samples, spec.dim);
    let stds = spec.std_profile.resolve(d)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut z = DMatrix::<f64>::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            z[(r, c)] = StandardNormal.sample(&mut rng);
        }
    }

    let exact = spec.within_group_corr == 1.0 && !spec.group_sizes.is_empty();
    if exact {
        orthonormalize_latents(&mut z, spec);
    }

    let mut x = z.clone();
    let mut start = 0;
    for &g in &spec.group_sizes {
        let signs = spec.signs(g);
        if exact {
            for i in 0..g {
                let col = z.column(start) * signs[i];
                x.set_column(start + i, &col);
            }
        } else if g > 1 {
            let mut c = &signs * signs.transpose() * spec.within_group_corr;
            c.fill_diagonal(1.0);
            let root = psd_sqrt(&c)?;
            let block = z.columns(start, g) * root;
            x.columns_mut(start, g).copy_from(&block);
        }
        start += g;
    }
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col *= stds[j];
    }

    let labels = spec.label_axis.as_ref().map(|axis| {
        let axis = DVector::from_column_slice(axis);
        let mut noise = ChaCha8Rng::seed_from_u64(spec.seed);
        noise.set_stream(1);
        (0..n)
            .map(|r| {
                let positive = x.row(r).transpose().dot(&axis) > 0.0;
                let flip = noise.random::<f64>() < spec.label_noise;
                usize::from(positive != flip)
            })
            .collect()
    });

    Ok((EmbeddingMatrix::new(x)?, labels))
}

/// Centers the latent columns that feed the output (the first column of each
/// group plus every independent dimension) and orthogonalizes them in-sample,
/// each scaled to unit `1/N` variance. Skipped when there are not enough
/// samples to do so.
fn orthonormalize_latents(z: &mut DMatrix<f64>, spec: &SyntheticSpec) {
    let n = z.nrows();
    let grouped: usize = spec.group_sizes.iter().sum();
    let mut latents: Vec<usize> = Vec::new();
    let mut start = 0;
    for &g in &spec.group_sizes {
        latents.push(start);
        start += g;
    }
    latents.extend(grouped..spec.dim);
    if n <= latents.len() {
        return;
    }
    let target = (n as f64).sqrt();
    let mut done: Vec<DVector<f64>> = Vec::with_capacity(latents.len());
    for &j in &latents {
        let mut v = z.column(j).into_owned();
        let mean = v.mean();
        v.add_scalar_mut(-mean);
        // two passes of Gram-Schmidt keep the residual overlap at rounding level
        for _ in 0..2 {
            for q in &done {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
            let mean = v.mean();
            v.add_scalar_mut(-mean);
        }
        let norm = v.norm();
        if norm > 0.0 {
            v /= norm;
        }
        z.set_column(j, &(&v * target));
        done.push(v);
    }
}
