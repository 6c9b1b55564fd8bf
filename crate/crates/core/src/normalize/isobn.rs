use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{compute_gamma, GroupSizeVector, MomentCache};
use crate::error::{IsoError, Result};
use crate::linalg::{compute_moments, correlation_from, EmbeddingMatrix};

/// Hyperparameters of the moving-statistics IsoBN transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoBnConfig {
    /// Weight of the new batch in the cache update, in `(0, 1]`.
    pub momentum: f64,
    /// Normalization strength exponent; `0` is the identity.
    pub strength: f64,
    pub stabilizer: f64,
    /// Rescale by `sqrt(c)` instead of `c`, which keeps the summed variance
    /// of the output equal to that of the input.
    pub exact_variance_renorm: bool,
}

impl Default for IsoBnConfig {
    fn default() -> Self {
        Self {
            momentum: 0.95,
            strength: 1.0,
            stabilizer: 0.1,
            exact_variance_renorm: false,
        }
    }
}

impl IsoBnConfig {
    pub fn with_strength(strength: f64) -> Self {
        Self {
            strength,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.momentum > 0.0 && self.momentum <= 1.0) {
            return Err(IsoError::InvalidArgument(format!(
                "momentum must lie in (0, 1], got {}",
                self.momentum
            )));
        }
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(IsoError::InvalidArgument(format!(
                "strength must be a finite non-negative number, got {}",
                self.strength
            )));
        }
        if !(self.stabilizer > 0.0 && self.stabilizer.is_finite()) {
            return Err(IsoError::InvalidArgument(format!(
                "stabilizer must be finite and positive, got {}",
                self.stabilizer
            )));
        }
        Ok(())
    }
}

/// Raw per-dimension scaling `theta` and its renormalized form `theta_bar = c * theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingVector {
    pub theta: DVector<f64>,
    pub theta_bar: DVector<f64>,
    /// The factor applied to `theta`.
    pub renorm: f64,
    pub gamma: GroupSizeVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Scaling factors derived from the cached statistics.
///
/// With `s = sigma` from the cache and `gamma` computed from the cached
/// correlation, `theta_i = (s_i * gamma_i + eps)^(-beta)` and
/// `c = sum(s^2) / sum(s^2 * theta^2)`. If every cached deviation is zero,
/// `c` is taken as 1.
pub fn compute_scaling(cache: &MomentCache, config: &IsoBnConfig) -> Result<ScalingVector> {
    config.validate()?;
    if !cache.is_initialized() {
        return Err(IsoError::UninitializedCache);
    }
    let sigma = &cache.moving_std;
    let rho = correlation_from(&cache.moving_cov, sigma);
    let gamma = compute_gamma(&rho)?;

    let theta = DVector::from_iterator(
        sigma.len(),
        sigma
            .iter()
            .zip(gamma.0.iter())
            .map(|(s, g)| (s * g + config.stabilizer).powf(-config.strength)),
    );
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let scaled: f64 = sigma.iter().zip(theta.iter()).map(|(s, t)| s * s * t * t).sum();
    let mut renorm = if total == 0.0 { 1.0 } else { total / scaled };
    if config.exact_variance_renorm {
        renorm = renorm.sqrt();
    }
    let theta_bar = &theta * renorm;
    Ok(ScalingVector {
        theta,
        theta_bar,
        renorm,
        gamma,
    })
}

fn apply_scaling(h: &EmbeddingMatrix, scaling: &ScalingVector) -> Result<EmbeddingMatrix> {
    let mut out = h.as_matrix().clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= scaling.theta_bar[j];
    }
    EmbeddingMatrix::new(out)
}

fn check_dim(h: &EmbeddingMatrix, cache: &MomentCache) -> Result<()> {
    if h.dim() != cache.dim() {
        return Err(IsoError::DimensionMismatch {
            expected: cache.dim(),
            found: h.dim(),
        });
    }
    Ok(())
}

/// Training-mode step: folds the batch statistics into `cache`, then scales
/// `h` using the updated cache. The mean is not subtracted.
pub fn isobn_train(h: &EmbeddingMatrix, cache: &mut MomentCache, config: &IsoBnConfig) -> Result<EmbeddingMatrix> {
    config.validate()?;
    check_dim(h, cache)?;
    let batch = compute_moments(h);
    cache.update(&batch, config.momentum)?;
    let scaling = compute_scaling(cache, config)?;
    apply_scaling(h, &scaling)
}

/// Inference-mode step against a frozen cache.
pub fn isobn_infer(h: &EmbeddingMatrix, cache: &MomentCache, config: &IsoBnConfig) -> Result<EmbeddingMatrix> {
    check_dim(h, cache)?;
    let scaling = compute_scaling(cache, config)?;
    apply_scaling(h, &scaling)
}

pub fn isobn_step(
    h: &EmbeddingMatrix,
    cache: &mut MomentCache,
    config: &IsoBnConfig,
    mode: Mode,
) -> Result<EmbeddingMatrix> {
    match mode {
        Mode::Train => isobn_train(h, cache, config),
        Mode::Infer => isobn_infer(h, cache, config),
    }
}
