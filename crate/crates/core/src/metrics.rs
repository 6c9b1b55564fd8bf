//! Isotropy measurements: explained-variance spectrum, the spread of
//! per-dimension standard deviations, and block structure in the correlation
//! matrix.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{IsoError, Result};
use crate::linalg::{center_columns, compute_moments, gram, sym_eigendecompose, EmbeddingMatrix};

pub const DEFAULT_CLUSTER_TAU: f64 = 0.5;
pub const DEFAULT_BUCKETS: usize = 40;

/// Stds below this are counted in the underflow bucket.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvSpectrum {
    /// `values[k - 1]` is the share of variance captured by the top `k` directions.
    pub values: Vec<f64>,
    /// Singular values of the centered matrix, descending.
    pub singular_values: Vec<f64>,
}

impl EvSpectrum {
    pub fn ev(&self, k: usize) -> f64 {
        self.values[k - 1]
    }
}

/// Explained-variance spectrum of the column-centered matrix.
///
/// Squared singular values come from the eigenvalues of the `d x d` Gram
/// matrix of the centered data. Centering makes the result invariant to a
/// constant offset; the ratio form makes it invariant to scale.
pub fn explained_variance(h: &EmbeddingMatrix, k: usize) -> Result<EvSpectrum> {
    if h.n_samples() < 2 {
        return Err(IsoError::InsufficientData(format!(
            "explained variance needs at least 2 samples, got {}",
            h.n_samples()
        )));
    }
    if k == 0 || k > h.dim() {
        return Err(IsoError::InvalidArgument(format!(
            "K must lie in [1, {}], got {k}",
            h.dim()
        )));
    }
    let (centered, _) = center_columns(h);
    let eig = sym_eigendecompose(&gram(&centered))?;
    let power: Vec<f64> = eig.eigenvalues.iter().map(|w| w.max(0.0)).collect();
    let total: f64 = power.iter().sum();
    if total == 0.0 {
        return Err(IsoError::InsufficientData(
            "every dimension is constant; explained variance is undefined".into(),
        ));
    }
    let mut acc = 0.0;
    let mut values = Vec::with_capacity(k);
    for p in power.iter().take(k) {
        acc += p;
        values.push((acc / total).min(1.0));
    }
    Ok(EvSpectrum {
        values,
        singular_values: power.iter().map(|p| p.sqrt()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StdDistribution {
    /// `(lower edge, count)` for each log10-spaced bucket.
    pub histogram: Vec<(f64, usize)>,
    /// Dimensions whose std is below [`STD_FLOOR`].
    pub underflow: usize,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

/// Lower edges of `n_buckets` log10-spaced buckets covering `[lo, hi]`.
pub fn log_bucket_edges(lo: f64, hi: f64, n_buckets: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    let width = (b - a) / n_buckets as f64;
    (0..n_buckets)
        .map(|i| if i == 0 { lo } else { 10f64.powf(a + width * i as f64) })
        .collect()
}

/// Index of the bucket holding `v`, given sorted lower edges. Values at or
/// above the last edge land in the last bucket.
fn bucket_of(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|e| *e <= v).saturating_sub(1)
}

/// Histogram of per-dimension standard deviations on a log10 axis.
pub fn std_distribution(h: &EmbeddingMatrix, n_buckets: usize) -> Result<StdDistribution> {
    if h.n_samples() < 2 {
        return Err(IsoError::InsufficientData(format!(
            "std distribution needs at least 2 samples, got {}",
            h.n_samples()
        )));
    }
    distribution_of(compute_moments(h).std.as_slice(), n_buckets)
}

/// Same as [`std_distribution`], starting from the deviations themselves.
pub fn distribution_of(stds: &[f64], n_buckets: usize) -> Result<StdDistribution> {
    if n_buckets == 0 {
        return Err(IsoError::InvalidArgument("bucket count must be positive".into()));
    }
    if stds.is_empty() {
        return Err(IsoError::InsufficientData("no dimensions".into()));
    }
    let mut sorted = stds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };

    let positive: Vec<f64> = sorted.iter().copied().filter(|s| *s >= STD_FLOOR).collect();
    let underflow = sorted.len() - positive.len();
    let histogram = match (positive.first(), positive.last()) {
        (Some(&lo), Some(&hi)) => {
            let edges = if hi > lo {
                log_bucket_edges(lo, hi, n_buckets)
            } else {
                vec![lo]
            };
            let mut counts = vec![0usize; edges.len()];
            for s in &positive {
                counts[bucket_of(&edges, *s)] += 1;
            }
            edges.into_iter().zip(counts).collect()
        }
        _ => Vec::new(),
    };
    Ok(StdDistribution {
        histogram,
        underflow,
        min,
        max,
        median,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationClustering {
    /// `permutation[new] = old` dimension index.
    pub permutation: Vec<usize>,
    /// Positions in the permuted order where a new cluster starts (the first
    /// cluster's 0 omitted).
    pub cluster_bounds: Vec<usize>,
    #[serde(skip)]
    pub abs_corr_reordered: DMatrix<f64>,
}

impl CorrelationClustering {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut edges = vec![0];
        edges.extend(&self.cluster_bounds);
        edges.push(self.permutation.len());
        edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Clusters as lists of original dimension indices, in permuted order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for size in self.cluster_sizes() {
            out.push(self.permutation[start..start + size].to_vec());
            start += size;
        }
        out
    }
}

/// Average-linkage agglomerative clustering on `1 - |rho|`, stopped once the
/// closest pair of clusters is farther apart than `1 - tau`.
///
/// Ties between equally close pairs go to the pair whose smallest original
/// indices are lexicographically first. Clusters are ordered by descending
/// size, then by smallest member; members keep their original order.
pub fn cluster_correlations(rho: &DMatrix<f64>, tau: f64) -> Result<CorrelationClustering> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(IsoError::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")));
    }
    if rho.nrows() != rho.ncols() {
        return Err(IsoError::DimensionMismatch {
            expected: rho.nrows(),
            found: rho.ncols(),
        });
    }
    let d = rho.nrows();
    let cut = 1.0 - tau;
    let abs = rho.map(|v| v.abs().min(1.0));

    // Each active cluster is keyed by its smallest member, so `members[i]`
    // is non-empty exactly when cluster `i` is alive.
    let mut members: Vec<Vec<usize>> = (0..d).map(|i| vec![i]).collect();
    let mut dist = DMatrix::from_fn(d, d, |i, j| 1.0 - abs[(i, j)]);
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..d {
            if members[i].is_empty() {
                continue;
            }
            for j in (i + 1)..d {
                if members[j].is_empty() {
                    continue;
                }
                let v = dist[(i, j)];
                if best.is_none_or(|(_, _, b)| v < b) {
                    best = Some((i, j, v));
                }
            }
        }
        let Some((a, b, v)) = best else { break };
        if v > cut {
            break;
        }
        let (na, nb) = (members[a].len() as f64, members[b].len() as f64);
        for k in 0..d {
            if k == a || k == b || members[k].is_empty() {
                continue;
            }
            let merged = (na * dist[(a, k)] + nb * dist[(b, k)]) / (na + nb);
            dist[(a, k)] = merged;
            dist[(k, a)] = merged;
        }
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        members[a].sort_unstable();
    }

    let mut clusters: Vec<Vec<usize>> = members.into_iter().filter(|m| !m.is_empty()).collect();
    clusters.sort_by(|x, y| y.len().cmp(&x.len()).then(x[0].cmp(&y[0])));

    let permutation: Vec<usize> = clusters.iter().flatten().copied().collect();
    let mut cluster_bounds = Vec::new();
    let mut pos = 0;
    for c in &clusters[..clusters.len().saturating_sub(1)] {
        pos += c.len();
        cluster_bounds.push(pos);
    }
    let abs_corr_reordered = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            abs[(permutation[i], permutation[j])]
        }
    });
    Ok(CorrelationClustering {
        permutation,
        cluster_bounds,
        abs_corr_reordered,
    })
}
