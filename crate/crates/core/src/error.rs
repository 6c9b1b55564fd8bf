use std::path::PathBuf;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum IsoError {
    #[error("matrix must have at least one sample and one dimension (got {rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("non-finite value at sample {row}, dimension {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric: entry ({row}, {col}) differs from its transpose by {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("matrix is ill-conditioned: smallest eigenvalue {smallest:e} vs largest {largest:e}")]
    IllConditioned { smallest: f64, largest: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("moment cache has not been initialized by a training step")]
    UninitializedCache,

    #[error("label {label} at sample {row} is outside [0, {n_classes})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        n_classes: usize,
    },

    #[error("labels contain a single class; at least two are required")]
    SingleClass,

    #[error("classifier weights are all zero; variance shares are undefined")]
    ZeroWeights,

    #[error("basis columns are not orthonormal (max deviation {deviation:e})")]
    NonOrthonormalBasis { deviation: f64 },

    #[error("line {line} has {found} fields, expected {expected}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("malformed input at {location}: {reason}")]
    Malformed { location: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IsoError {
    /// True for failures that stem from numerical conditioning rather than
    /// malformed or invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            IsoError::IllConditioned { .. } | IsoError::ZeroWeights | IsoError::NonOrthonormalBasis { .. }
        )
    }

    /// Stable machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            IsoError::EmptyMatrix { .. } => "empty_matrix",
            IsoError::NonFinite { .. } => "non_finite",
            IsoError::DimensionMismatch { .. } => "dimension_mismatch",
            IsoError::NotSymmetric { .. } => "not_symmetric",
            IsoError::IllConditioned { .. } => "ill_conditioned",
            IsoError::InsufficientData(_) => "insufficient_data",
            IsoError::InvalidArgument(_) => "invalid_argument",
            IsoError::UninitializedCache => "uninitialized_cache",
            IsoError::LabelOutOfRange { .. } => "label_out_of_range",
            IsoError::SingleClass => "single_class",
            IsoError::ZeroWeights => "zero_weights",
            IsoError::NonOrthonormalBasis { .. } => "non_orthonormal_basis",
            IsoError::RaggedRow { .. } => "ragged_row",
            IsoError::Malformed { .. } => "malformed",
            IsoError::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, IsoError>;
