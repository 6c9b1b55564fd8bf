//! Linear-probe analysis of how a softmax classifier uses the principal
//! components of its input embeddings.
//!
//! A classifier is trained by full-batch gradient descent on frozen
//! embeddings. Along the way we track how far its weights move from their
//! initialization inside the top-eigenvector subspace of the embedding
//! covariance, and how the variance of its logits splits across principal
//! components.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{IsoError, Result};
use crate::linalg::{compute_moments, sym_eigendecompose, EigenDecomposition, EmbeddingMatrix};

/// Dimension of the subspace used for drift metrics.
pub const DRIFT_SUBSPACE: usize = 10;

/// Gradient-norm threshold at which training stops early.
pub const GRAD_TOL: f64 = 1e-6;

const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    pub weights: DMatrix<f64>,
    init_weights: DMatrix<f64>,
}

impl SoftmaxClassifier {
    /// Weights drawn uniformly from `[-1/sqrt(d), 1/sqrt(d)]`.
    pub fn new(dim: usize, n_classes: usize, seed: u64) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = DMatrix::zeros(dim, n_classes);
        for i in 0..dim {
            for c in 0..n_classes {
                init[(i, c)] = rng.random_range(-bound..=bound);
            }
        }
        Self {
            weights: init.clone(),
            init_weights: init,
        }
    }

    pub fn init_weights(&self) -> &DMatrix<f64> {
        &self.init_weights
    }

    pub fn n_classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn probabilities(&self, h: &EmbeddingMatrix) -> DMatrix<f64> {
        softmax_rows(h.as_matrix() * &self.weights)
    }

    /// Mean cross-entropy over the samples.
    pub fn loss(&self, h: &EmbeddingMatrix, labels: &[usize]) -> f64 {
        let logits = h.as_matrix() * &self.weights;
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = logits.row(r);
            let m = row.max();
            let lse = m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        total / labels.len() as f64
    }
}

fn softmax_rows(mut logits: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in logits.row_iter_mut() {
        let m = row.max();
        row.apply(|z| *z = (*z - m).exp());
        let s = row.sum();
        row /= s;
    }
    logits
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRecord {
    pub step: usize,
    pub cosine_sim: f64,
    pub l2_dist: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    /// Record drift every this many steps (the first and last step are
    /// always recorded).
    pub record_every: usize,
    /// Number of classes; inferred as `max(label) + 1` when `None`.
    pub n_classes: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 0.1,
            seed: 0,
            record_every: 10,
            n_classes: None,
        }
    }
}

fn check_labels(h: &EmbeddingMatrix, labels: &[usize], n_classes: Option<usize>) -> Result<usize> {
    if labels.len() != h.n_samples() {
        return Err(IsoError::DimensionMismatch {
            expected: h.n_samples(),
            found: labels.len(),
        });
    }
    let c = n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, l)| **l >= c) {
        return Err(IsoError::LabelOutOfRange { row, label, n_classes: c });
    }
    if c < 2 || labels.iter().all(|l| *l == labels[0]) {
        return Err(IsoError::SingleClass);
    }
    if h.n_samples() < c {
        return Err(IsoError::InsufficientData(format!(
            "{} samples for {c} classes",
            h.n_samples()
        )));
    }
    Ok(c)
}

fn covariance_eigen(h: &EmbeddingMatrix) -> Result<EigenDecomposition> {
    sym_eigendecompose(&compute_moments(h).covariance)
}

/// Runs gradient descent, calling `observe(step, classifier)` at every
/// recording point.
fn train_with(
    h: &EmbeddingMatrix,
    labels: &[usize],
    config: &TrainConfig,
    mut observe: impl FnMut(usize, &SoftmaxClassifier) -> Result<()>,
) -> Result<SoftmaxClassifier> {
    if !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(IsoError::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            config.lr
        )));
    }
    let n_classes = check_labels(h, labels, config.n_classes)?;
    let n = h.n_samples() as f64;
    let every = config.record_every.max(1);

    let mut onehot = DMatrix::zeros(h.n_samples(), n_classes);
    for (r, &y) in labels.iter().enumerate() {
        onehot[(r, y)] = 1.0;
    }
    let x = h.as_matrix();
    let mut clf = SoftmaxClassifier::new(h.dim(), n_classes, config.seed);
    observe(0, &clf)?;

    for step in 1..=config.steps {
        let residual = clf.probabilities(h) - &onehot;
        let grad = x.tr_mul(&residual) / n;
        clf.weights -= &grad * config.lr;
        let converged = grad.norm() < GRAD_TOL;
        if step % every == 0 || step == config.steps || converged {
            observe(step, &clf)?;
        }
        if converged {
            break;
        }
    }
    Ok(clf)
}

/// Full-batch gradient descent on mean cross-entropy, recording drift from
/// initialization in the top-10 eigenvector subspace of `Cov(h)`.
pub fn train_softmax(
    h: &EmbeddingMatrix,
    labels: &[usize],
    config: &TrainConfig,
) -> Result<(SoftmaxClassifier, Vec<DriftRecord>)> {
    let basis = covariance_eigen(h)?.top_vectors(DRIFT_SUBSPACE);
    let mut records = Vec::new();
    let clf = train_with(h, labels, config, |step, clf| {
        let (cosine_sim, l2_dist) = project_and_compare(&clf.weights, clf.init_weights(), &basis)?;
        records.push(DriftRecord {
            step,
            cosine_sim,
            l2_dist,
            loss: clf.loss(h, labels),
        });
        Ok(())
    })?;
    Ok((clf, records))
}

fn orthonormality_deviation(basis: &DMatrix<f64>) -> f64 {
    let k = basis.ncols();
    (basis.tr_mul(basis) - DMatrix::identity(k, k)).amax()
}

/// Cosine similarity and L2 distance between `P W` and `P W_init`, where
/// `P` projects onto the span of `basis`, comparing the projected matrices as
/// flattened vectors.
pub fn project_and_compare(
    weights: &DMatrix<f64>,
    init_weights: &DMatrix<f64>,
    basis: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    if weights.shape() != init_weights.shape() {
        return Err(IsoError::DimensionMismatch {
            expected: init_weights.len(),
            found: weights.len(),
        });
    }
    if basis.nrows() != weights.nrows() {
        return Err(IsoError::DimensionMismatch {
            expected: weights.nrows(),
            found: basis.nrows(),
        });
    }
    let deviation = orthonormality_deviation(basis);
    if deviation > ORTHONORMAL_TOL {
        return Err(IsoError::NonOrthonormalBasis { deviation });
    }
    let project = |w: &DMatrix<f64>| basis * basis.tr_mul(w);
    let (a, b) = (project(weights), project(init_weights));
    if a == b {
        return Ok((1.0, 0.0));
    }
    let (na, nb) = (a.norm(), b.norm());
    let cosine = if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
    };
    Ok((cosine, (a - b).norm()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcVarianceShare {
    pub shares: Vec<f64>,
}

impl PcVarianceShare {
    /// Share of logit variance carried by the top `k` components.
    pub fn cumulative(&self, k: usize) -> f64 {
        self.shares.iter().take(k).sum()
    }
}

/// Splits logit variance across principal components:
/// `Var_i = w_i * ||W^T v_i||^2`, normalized to sum to one.
pub fn pc_variance_shares(weights: &DMatrix<f64>, eig: &EigenDecomposition) -> Result<PcVarianceShare> {
    if weights.nrows() != eig.dim() {
        return Err(IsoError::DimensionMismatch {
            expected: eig.dim(),
            found: weights.nrows(),
        });
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(IsoError::ZeroWeights);
    }
    let per_class = weights.tr_mul(&eig.eigenvectors); // c x d, column i = W^T v_i
    let var: Vec<f64> = (0..eig.dim())
        .map(|i| eig.eigenvalues[i].max(0.0) * per_class.column(i).norm_squared())
        .collect();
    let total: f64 = var.iter().sum();
    if total == 0.0 {
        return Err(IsoError::InsufficientData(
            "classifier produces no logit variance on this covariance".into(),
        ));
    }
    Ok(PcVarianceShare {
        shares: var.iter().map(|v| v / total).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRecord {
    #[serde(flatten)]
    pub drift: DriftRecord,
    pub pc_shares: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub n_samples: usize,
    pub dim: usize,
    pub n_classes: usize,
    pub steps_run: usize,
    pub covariance_eigenvalues: Vec<f64>,
    pub records: Vec<ProbeRecord>,
}

impl ProbeResult {
    pub fn final_shares(&self) -> PcVarianceShare {
        PcVarianceShare {
            shares: self.records.last().map(|r| r.pc_shares.clone()).unwrap_or_default(),
        }
    }
}

/// Trains a classifier and records, at each recording point, both the drift
/// metrics and the per-component logit variance shares.
pub fn run_probe(h: &EmbeddingMatrix, labels: &[usize], config: &TrainConfig) -> Result<(SoftmaxClassifier, ProbeResult)> {
    let eig = covariance_eigen(h)?;
    let basis = eig.top_vectors(DRIFT_SUBSPACE);
    let mut records = Vec::new();
    let clf = train_with(h, labels, config, |step, clf| {
        let (cosine_sim, l2_dist) = project_and_compare(&clf.weights, clf.init_weights(), &basis)?;
        let shares = pc_variance_shares(&clf.weights, &eig)?;
        records.push(ProbeRecord {
            drift: DriftRecord {
                step,
                cosine_sim,
                l2_dist,
                loss: clf.loss(h, labels),
            },
            pc_shares: shares.shares,
        });
        Ok(())
    })?;
    let result = ProbeResult {
        n_samples: h.n_samples(),
        dim: h.dim(),
        n_classes: clf.n_classes(),
        steps_run: records.last().map_or(0, |r| r.drift.step),
        covariance_eigenvalues: eig.eigenvalues.iter().copied().collect(),
        records,
    };
    Ok((clf, result))
}

/// Eigen-decomposition of the sample covariance of `h`, as used by the probe.
pub fn embedding_eigen(h: &EmbeddingMatrix) -> Result<EigenDecomposition> {
    covariance_eigen(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, StdProfile, SyntheticSpec};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn unit(d: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    }

    fn separable(seed: u64) -> (EmbeddingMatrix, Vec<usize>) {
        let spec = SyntheticSpec {
            n_samples: 200,
            dim: 2,
            std_profile: StdProfile::Explicit(vec![1.0, 0.5]),
            label_axis: Some(vec![1.0, 0.3]),
            seed,
            ..Default::default()
        };
        let (h, l) = generate(&spec).unwrap();
        (h, l.unwrap())
    }

    #[test]
    fn zero_steps_returns_initial_weights() {
        let (h, labels) = separable(1);
        let config = TrainConfig { steps: 0, ..Default::default() };
        let (clf, records) = train_softmax(&h, &labels, &config).unwrap();
        assert_eq!(&clf.weights, clf.init_weights());
        assert_eq!(records.len(), 1);
        assert_eq!((records[0].cosine_sim, records[0].l2_dist), (1.0, 0.0));
    }

    #[test]
    fn initializer_respects_bound() {
        let clf = SoftmaxClassifier::new(16, 3, 4);
        assert!(clf.weights.iter().all(|w| w.abs() <= 0.25));
        assert_eq!((clf.dim(), clf.n_classes()), (16, 3));
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let (h, labels) = separable(2);
        let config = TrainConfig {
            steps: 500,
            lr: 0.1,
            record_every: 25,
            ..Default::default()
        };
        let (_, records) = train_softmax(&h, &labels, &config).unwrap();
        assert!(records.len() > 2);
        for pair in records.windows(2) {
            assert!(pair[1].loss < pair[0].loss);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (h, labels) = separable(3);
        let config = TrainConfig { steps: 50, seed: 11, ..Default::default() };
        let (a, ra) = train_softmax(&h, &labels, &config).unwrap();
        let (b, rb) = train_softmax(&h, &labels, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn label_errors() {
        let (h, mut labels) = separable(4);
        let config = TrainConfig { n_classes: Some(2), ..Default::default() };
        labels[5] = 2;
        assert!(matches!(
            train_softmax(&h, &labels, &config),
            Err(IsoError::LabelOutOfRange { row: 5, label: 2, n_classes: 2 })
        ));
        let ones = vec![1; h.n_samples()];
        assert!(matches!(
            train_softmax(&h, &ones, &TrainConfig::default()),
            Err(IsoError::SingleClass)
        ));
        assert!(train_softmax(&h, &labels[..10], &TrainConfig::default()).is_err());
    }

    #[test]
    fn compare_identity_and_scaling() {
        let basis = DMatrix::from_columns(&[unit(4, 0), unit(4, 2)]);
        let w0 = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(project_and_compare(&w0, &w0, &basis).unwrap(), (1.0, 0.0));
        let (cos, l2) = project_and_compare(&(&w0 * 2.0), &w0, &basis).unwrap();
        assert_abs_diff_eq!(cos, 1.0, epsilon = 1e-12);
        let p_norm = (1.0f64 + 4.0 + 25.0 + 36.0).sqrt();
        assert_abs_diff_eq!(l2, p_norm, epsilon = 1e-12);
    }

    #[test]
    fn compare_rejects_non_orthonormal_basis() {
        let basis = DMatrix::from_columns(&[unit(3, 0) * 2.0]);
        let w = DMatrix::zeros(3, 2);
        assert!(matches!(
            project_and_compare(&w, &w, &basis),
            Err(IsoError::NonOrthonormalBasis { .. })
        ));
    }

    #[test]
    fn shares_for_single_component_classifier() {
        let eig = EigenDecomposition {
            eigenvalues: DVector::from_vec(vec![4.0, 1.0, 1.0]),
            eigenvectors: DMatrix::identity(3, 3),
        };
        let w = DMatrix::from_columns(&[unit(3, 0), unit(3, 0)]);
        let s = pc_variance_shares(&w, &eig).unwrap();
        assert_eq!(s.shares, vec![1.0, 0.0, 0.0]);

        let iso = EigenDecomposition {
            eigenvalues: DVector::from_element(4, 1.0),
            eigenvectors: DMatrix::identity(4, 4),
        };
        let s = pc_variance_shares(&DMatrix::from_element(4, 3, 0.7), &iso).unwrap();
        for v in &s.shares {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
        }
        assert!(matches!(pc_variance_shares(&DMatrix::zeros(4, 3), &iso), Err(IsoError::ZeroWeights)));
    }

    #[test]
    fn shares_ignore_eigenvector_sign_and_weight_scale() {
        let (h, _) = separable(6);
        let eig = embedding_eigen(&h).unwrap();
        let w = DMatrix::from_row_slice(2, 3, &[0.3, -0.1, 0.8, 0.5, 0.2, -0.4]);
        let base = pc_variance_shares(&w, &eig).unwrap();
        let mut flipped = eig.clone();
        flipped.eigenvectors.column_mut(1).neg_mut();
        let s = pc_variance_shares(&w, &flipped).unwrap();
        let scaled = pc_variance_shares(&(&w * 7.5), &eig).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(s.shares[i], base.shares[i], epsilon = 1e-12);
            assert_abs_diff_eq!(scaled.shares[i], base.shares[i], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(base.shares.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn probe_records_shares_at_each_point() {
        let (h, labels) = separable(7);
        let config = TrainConfig { steps: 40, record_every: 10, ..Default::default() };
        let (_, result) = run_probe(&h, &labels, &config).unwrap();
        let steps: Vec<usize> = result.records.iter().map(|r| r.drift.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 30, 40]);
        assert_eq!(result.steps_run, 40);
        for r in &result.records {
            assert_abs_diff_eq!(r.pc_shares.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        }
    }
}
