//! Moving second-moment cache and its on-disk encoding.
//!
//! Layout, all little-endian:
//!
//! | offset          | size        | field                          |
//! |-----------------|-------------|--------------------------------|
//! | 0               | 4           | magic `IBNC`                   |
//! | 4               | 4 (u32)     | format version (1)             |
//! | 8               | 8 (u64)     | dimension `d`                  |
//! | 16              | 8 (u64)     | number of training updates     |
//! | 24              | 8·d (f64)   | moving standard deviation      |
//! | 24 + 8·d        | 8·d² (f64)  | moving covariance, row-major   |

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{IsoError, Result};
use crate::linalg::{check_symmetric, MomentEstimates};

pub const CACHE_MAGIC: &[u8; 4] = b"IBNC";
pub const CACHE_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentCache {
    pub moving_cov: DMatrix<f64>,
    pub moving_std: DVector<f64>,
    pub update_count: u64,
}

impl MomentCache {
    /// An empty cache for `dim`-dimensional embeddings.
    pub fn new(dim: usize) -> Self {
        Self {
            moving_cov: DMatrix::zeros(dim, dim),
            moving_std: DVector::zeros(dim),
            update_count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.moving_std.len()
    }

    pub fn is_initialized(&self) -> bool {
        self.update_count > 0
    }

    /// Folds one batch into the cache. The first batch is copied verbatim;
    /// later batches move the estimates by `momentum` toward the batch values.
    pub fn update(&mut self, batch: &MomentEstimates, momentum: f64) -> Result<()> {
        if batch.std.len() != self.dim() {
            return Err(IsoError::DimensionMismatch {
                expected: self.dim(),
                found: batch.std.len(),
            });
        }
        if self.is_initialized() {
            self.moving_std += (&batch.std - &self.moving_std) * momentum;
            self.moving_cov += (&batch.covariance - &self.moving_cov) * momentum;
        } else {
            self.moving_std.copy_from(&batch.std);
            self.moving_cov.copy_from(&batch.covariance);
        }
        self.update_count += 1;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dim();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * (d + d * d));
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&(d as u64).to_le_bytes());
        out.extend_from_slice(&self.update_count.to_le_bytes());
        for v in self.moving_std.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for i in 0..d {
            for j in 0..d {
                out.extend_from_slice(&self.moving_cov[(i, j)].to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let malformed = |location: &str, reason: String| IsoError::Malformed {
            location: format!("cache {location}"),
            reason,
        };
        if bytes.len() < HEADER_LEN {
            return Err(malformed(
                "header",
                format!("need {HEADER_LEN} bytes, found {}", bytes.len()),
            ));
        }
        if &bytes[0..4] != CACHE_MAGIC {
            return Err(malformed("magic", format!("expected \"IBNC\", found {:?}", &bytes[0..4])));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(malformed("version", format!("unsupported version {version}")));
        }
        let d = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let update_count = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        if d == 0 {
            return Err(malformed("dimension", "dimension must be positive".into()));
        }
        let expected = usize::try_from(d)
            .ok()
            .and_then(|d| d.checked_mul(d)?.checked_add(d)?.checked_mul(8)?.checked_add(HEADER_LEN))
            .ok_or_else(|| malformed("dimension", format!("dimension {d} is too large")))?;
        if bytes.len() != expected {
            return Err(malformed(
                "payload",
                format!("dimension {d} needs {expected} bytes, found {}", bytes.len()),
            ));
        }
        let d = d as usize;
        let mut values = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let moving_std = DVector::from_iterator(d, values.by_ref().take(d));
        let moving_cov = DMatrix::from_row_iterator(d, d, values);

        for (i, s) in moving_std.iter().enumerate() {
            if !s.is_finite() || *s < 0.0 {
                return Err(malformed(&format!("std[{i}]"), format!("invalid standard deviation {s}")));
            }
        }
        for i in 0..d {
            for j in 0..d {
                let v = moving_cov[(i, j)];
                if !v.is_finite() {
                    return Err(malformed(&format!("cov[{i}][{j}]"), format!("non-finite value {v}")));
                }
            }
            if moving_cov[(i, i)] < 0.0 {
                return Err(malformed(&format!("cov[{i}][{i}]"), "negative variance".into()));
            }
        }
        check_symmetric(&moving_cov, 1e-12)?;
        Ok(Self {
            moving_cov,
            moving_std,
            update_count,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|source| IsoError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| IsoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
