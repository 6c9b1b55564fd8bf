//! Matrix and label files.
//!
//! Two matrix encodings are supported:
//!
//! * CSV: one sample per row, comma-separated, optional header line. Values
//!   are written with 17 significant digits so they reload to the same bits.
//! * raw-f64: magic `IKMX`, format version (u32), `N` (u64), `d` (u64), then
//!   `N * d` f64 values in row-major order. Everything little-endian.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{IsoError, Result};
use crate::linalg::EmbeddingMatrix;

pub const MATRIX_MAGIC: &[u8; 4] = b"IKMX";
pub const MATRIX_VERSION: u32 = 1;
const RAW_HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    RawF64,
}

impl MatrixFormat {
    /// `.csv` (any case) is CSV, everything else raw-f64.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::RawF64,
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = IsoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "raw" | "raw-f64" | "f64" => Ok(MatrixFormat::RawF64),
            other => Err(IsoError::InvalidArgument(format!("unknown matrix format {other:?}"))),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IsoError + '_ {
    move |source| IsoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    match format {
        MatrixFormat::Csv => parse_csv(&bytes),
        MatrixFormat::RawF64 => decode_raw(&bytes),
    }
}

pub fn save_matrix(h: &EmbeddingMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Csv => encode_csv(h).into_bytes(),
        MatrixFormat::RawF64 => encode_raw(h),
    };
    fs::write(path, bytes).map_err(io_err(path))
}

/// Formats a float with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn encode_csv(h: &EmbeddingMatrix) -> String {
    let mut out = String::new();
    for r in 0..h.n_samples() {
        let row: Vec<String> = h.as_matrix().row(r).iter().map(|v| format_f64(*v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn csv_reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes)
}

fn csv_location(record: &csv::StringRecord, fallback: usize) -> usize {
    record.position().map_or(fallback, |p| p.line() as usize)
}

/// Parses CSV text. A first line containing any non-numeric field is taken
/// as a header and skipped.
pub fn parse_csv(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let mut values = Vec::new();
    let mut dim: Option<usize> = None;
    let mut n_samples = 0usize;
    for (idx, record) in csv_reader(bytes).records().enumerate() {
        let record = record.map_err(|e| IsoError::Malformed {
            location: e
                .position()
                .map_or_else(|| format!("record {}", idx + 1), |p| format!("line {}", p.line())),
            reason: e.to_string(),
        })?;
        let line = csv_location(&record, idx + 1);
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(f64::from_str).collect();
        if idx == 0 && parsed.iter().any(|p| p.is_err()) {
            continue;
        }
        let expected = *dim.get_or_insert(record.len());
        if record.len() != expected {
            return Err(IsoError::RaggedRow {
                line,
                expected,
                found: record.len(),
            });
        }
        for (col, (field, value)) in record.iter().zip(parsed).enumerate() {
            let v = value.map_err(|_| IsoError::Malformed {
                location: format!("line {line}, column {}", col + 1),
                reason: format!("{field:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(IsoError::NonFinite { row: n_samples, col });
            }
            values.push(v);
        }
        n_samples += 1;
    }
    EmbeddingMatrix::from_row_slice(n_samples, dim.unwrap_or(0), &values)
}

pub fn encode_raw(h: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 8 * h.n_samples() * h.dim());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    out.extend_from_slice(&(h.n_samples() as u64).to_le_bytes());
    out.extend_from_slice(&(h.dim() as u64).to_le_bytes());
    for v in h.to_row_major() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let malformed = |location: &str, reason: String| IsoError::Malformed {
        location: location.to_string(),
        reason,
    };
    if bytes.len() < RAW_HEADER_LEN {
        return Err(malformed(
            "header",
            format!("need {RAW_HEADER_LEN} bytes, found {}", bytes.len()),
        ));
    }
    if &bytes[0..4] != MATRIX_MAGIC {
        return Err(malformed("magic", format!("expected \"IKMX\", found {:?}", &bytes[0..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MATRIX_VERSION {
        return Err(malformed("version", format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let d = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if n == 0 || d == 0 {
        return Err(IsoError::EmptyMatrix {
            rows: n as usize,
            cols: d as usize,
        });
    }
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .and_then(|b| b.checked_add(RAW_HEADER_LEN as u64))
        .ok_or_else(|| malformed("header", format!("{n} x {d} matrix is too large")))?;
    if bytes.len() as u64 != expected {
        return Err(malformed(
            "payload",
            format!("{n} x {d} matrix needs {expected} bytes, found {}", bytes.len()),
        ));
    }
    let (n, d) = (n as usize, d as usize);
    let values: Vec<f64> = bytes[RAW_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
        return Err(IsoError::NonFinite {
            row: idx / d,
            col: idx % d,
        });
    }
    EmbeddingMatrix::from_row_slice(n, d, &values)
}

/// Reads class labels, one non-negative integer per line (first field of
/// each CSV record). A non-numeric first line is treated as a header.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_labels(&bytes)
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (idx, record) in csv_reader(bytes).records().enumerate() {
        let record = record.map_err(|e| IsoError::Malformed {
            location: format!("record {}", idx + 1),
            reason: e.to_string(),
        })?;
        let line = csv_location(&record, idx + 1);
        let field = record.get(0).unwrap_or("");
        match field.parse::<usize>() {
            Ok(v) => labels.push(v),
            Err(_) if idx == 0 => continue,
            Err(_) => {
                return Err(IsoError::Malformed {
                    location: format!("line {line}, column 1"),
                    reason: format!("{field:?} is not a class label"),
                })
            }
        }
    }
    Ok(labels)
}

pub fn save_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 2);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}
