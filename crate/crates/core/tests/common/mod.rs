//! Independent reference computations used as test oracles. None of these
//! call into the crate's numerical kernels.
#![allow(dead_code, clippy::needless_range_loop)]

/// Row-major `n x d` data as nested vectors.
pub type Rows = Vec<Vec<f64>>;

pub fn rows_of(h: &isokit::linalg::EmbeddingMatrix) -> Rows {
    (0..h.n_samples())
        .map(|r| (0..h.dim()).map(|c| h.get(r, c)).collect())
        .collect()
}

pub fn two_pass_mean(rows: &Rows) -> Vec<f64> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

/// Biased (1/N) covariance by the textbook two-pass formula.
pub fn two_pass_cov(rows: &Rows) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean = two_pass_mean(rows);
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            out[i][j] = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / n;
        }
    }
    out
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix. Returns the
/// eigenvalues in descending order and eigenvectors as columns (`v[i][k]`
/// is component `i` of eigenvector `k`).
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[y][y].partial_cmp(&m[x][x]).unwrap());
    let values = order.iter().map(|&k| m[k][k]).collect();
    let vectors = (0..n).map(|i| order.iter().map(|&k| v[i][k]).collect()).collect();
    (values, vectors)
}

/// EV_k from a full Jacobi decomposition of the centered Gram matrix.
pub fn ev_oracle(rows: &Rows) -> Vec<f64> {
    let n = rows.len() as f64;
    let cov = two_pass_cov(rows);
    let gram: Vec<Vec<f64>> = cov.iter().map(|r| r.iter().map(|v| v * n).collect()).collect();
    let (w, _) = jacobi_eigen(&gram);
    let w: Vec<f64> = w.into_iter().map(|x| x.max(0.0)).collect();
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    w.iter()
        .map(|x| {
            acc += x;
            acc / total
        })
        .collect()
}

/// Independent recurrence for the moving caches: first batch copies, later
/// batches blend with weight `alpha`.
pub struct CacheOracle {
    pub std: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub started: bool,
}

impl CacheOracle {
    pub fn new(d: usize) -> Self {
        Self {
            std: vec![0.0; d],
            cov: vec![vec![0.0; d]; d],
            started: false,
        }
    }

    pub fn feed(&mut self, rows: &Rows, alpha: f64) {
        let cov = two_pass_cov(rows);
        let std: Vec<f64> = (0..cov.len()).map(|i| cov[i][i].sqrt()).collect();
        if !self.started {
            self.std = std;
            self.cov = cov;
            self.started = true;
            return;
        }
        for i in 0..std.len() {
            self.std[i] += alpha * (std[i] - self.std[i]);
            for j in 0..std.len() {
                self.cov[i][j] += alpha * (cov[i][j] - self.cov[i][j]);
            }
        }
    }
}
