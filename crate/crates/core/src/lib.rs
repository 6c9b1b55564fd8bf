//! Isotropy analysis and normalization for embedding matrices.
//!
//! The crate measures how unevenly the variance of a set of embeddings is
//! spread across directions and offers three transforms that counteract it:
//! ZCA whitening, batch normalization, and IsoBN, which scales each
//! dimension by its deviation and by a soft count of the dimensions it is
//! correlated with.
//!
//! ```
//! use isokit::prelude::*;
//!
//! let spec = SyntheticSpec {
//!     n_samples: 512,
//!     dim: 8,
//!     group_sizes: vec![4],
//!     within_group_corr: 0.9,
//!     ..Default::default()
//! };
//! let (h, _) = generate(&spec).unwrap();
//! let raw = explained_variance(&h, 3).unwrap();
//!
//! let mut cache = MomentCache::new(h.dim());
//! let iso = isobn_train(&h, &mut cache, &IsoBnConfig::default()).unwrap();
//! assert!(explained_variance(&iso, 3).unwrap().ev(1) < raw.ev(1));
//! ```

pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod normalize;
pub mod probe;
pub mod report;
pub mod synth;

pub use error::{IsoError, Result};

pub mod prelude {
    pub use crate::error::{IsoError, Result};
    pub use crate::linalg::{
        compute_moments, inverse_sqrt, sym_eigendecompose, EigenDecomposition, EmbeddingMatrix,
        MomentEstimates,
    };
    pub use crate::metrics::{cluster_correlations, explained_variance, std_distribution};
    pub use crate::normalize::{
        batch_normalize, compute_gamma, compute_scaling, isobn_core_transform, isobn_infer,
        isobn_step, isobn_train, whiten, IsoBnConfig, MomentCache, Mode,
    };
    pub use crate::probe::{pc_variance_shares, project_and_compare, run_probe, train_softmax, TrainConfig};
    pub use crate::synth::{generate, StdProfile, SyntheticSpec};
}
