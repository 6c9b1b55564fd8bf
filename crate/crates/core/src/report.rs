//! Isotropy reports and deterministic JSON output.
//!
//! Reports are serialized with object keys in sorted order and every float
//! written with 17 significant digits, so identical inputs give identical
//! bytes.

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::linalg::{compute_moments, EmbeddingMatrix};
use crate::metrics::{
    cluster_correlations, explained_variance, std_distribution, CorrelationClustering, EvSpectrum,
    StdDistribution,
};
use crate::normalize::{batch_normalize, isobn_train, IsoBnConfig, MomentCache};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// JSON Schema for [`IsotropyReport`].
pub const REPORT_SCHEMA: &str = include_str!("../schema/isotropy_report.schema.json");

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    pub ev_k: usize,
    pub cluster_tau: f64,
    pub buckets: usize,
    /// When set, EV spectra are also reported after batch normalization and
    /// after IsoBN with this configuration.
    pub compare: Option<IsoBnConfig>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            ev_k: 10,
            cluster_tau: crate::metrics::DEFAULT_CLUSTER_TAU,
            buckets: crate::metrics::DEFAULT_BUCKETS,
            compare: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceInfo {
    pub path: String,
    pub n_samples: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringSummary {
    pub tau: f64,
    pub cluster_sizes: Vec<usize>,
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    /// EV_1, EV_2, EV_3 (fewer when `d < 3`).
    pub ev_head: Vec<f64>,
    /// The same values as `"0.76 / 0.87 / 0.89"`.
    pub summary: String,
    pub spectrum: Vec<f64>,
}

impl MethodSummary {
    fn from_spectrum(spectrum: &EvSpectrum) -> Self {
        let ev_head: Vec<f64> = spectrum.values.iter().take(3).copied().collect();
        let summary = ev_head
            .iter()
            .map(|v| format!("{v:.2}"))
            .collect::<Vec<_>>()
            .join(" / ");
        Self {
            ev_head,
            summary,
            spectrum: spectrum.values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub raw: MethodSummary,
    pub batch_norm: MethodSummary,
    pub isobn: MethodSummary,
    pub isobn_config: IsoBnConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsotropyReport {
    pub schema_version: u32,
    pub source: SourceInfo,
    pub std_distribution: StdDistribution,
    pub clustering: ClusteringSummary,
    pub explained_variance: EvSpectrum,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

/// Everything computed by [`analyze`], including the pieces that are not
/// part of the JSON report (the reordered correlation matrix and the
/// per-method spectra needed for plots).
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: IsotropyReport,
    pub clustering: CorrelationClustering,
}

pub fn analyze(h: &EmbeddingMatrix, source: &str, options: &AnalyzeOptions) -> Result<Analysis> {
    let raw_ev = explained_variance(h, options.ev_k)?;
    let std_dist = std_distribution(h, options.buckets)?;
    let clustering = cluster_correlations(&compute_moments(h).correlation, options.cluster_tau)?;

    let comparison = match &options.compare {
        Some(config) => {
            let bn = explained_variance(&batch_normalize(h), options.ev_k)?;
            let mut cache = MomentCache::new(h.dim());
            let iso = explained_variance(&isobn_train(h, &mut cache, config)?, options.ev_k)?;
            Some(Comparison {
                raw: MethodSummary::from_spectrum(&raw_ev),
                batch_norm: MethodSummary::from_spectrum(&bn),
                isobn: MethodSummary::from_spectrum(&iso),
                isobn_config: *config,
            })
        }
        None => None,
    };

    let report = IsotropyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        source: SourceInfo {
            path: source.to_string(),
            n_samples: h.n_samples(),
            dim: h.dim(),
        },
        std_distribution: std_dist,
        clustering: ClusteringSummary {
            tau: options.cluster_tau,
            cluster_sizes: clustering.cluster_sizes(),
            permutation: clustering.permutation.clone(),
        },
        explained_variance: raw_ev,
        comparison,
    };
    Ok(Analysis { report, clustering })
}

/// Serializes any value as canonical JSON: sorted keys, no whitespace,
/// floats with 17 significant digits.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("report types serialize to JSON");
    let mut out = String::new();
    write_value(&value, &mut out);
    out
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&crate::io::format_f64(n.as_f64().unwrap()));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).unwrap());
                out.push(':');
                write_value(&map[key], out);
            }
            out.push('}');
        }
    }
}
