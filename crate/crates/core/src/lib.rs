//! EAPCR regression for multi-source heterogeneous tabular data.
//!
//! Rows of mixed categorical and numerical columns are encoded into one
//! integer index per feature ([`features`]), embedded, turned into a feature
//! correlation matrix and a permuted copy of it, read by two small CNN
//! branches and combined with a residual MLP over the flattened embedding
//! ([`model`]). Everything is differentiated by the tape in [`tensor`] and
//! trained with [`trainer`]; [`evaluation`] and [`io`] provide the metric
//! suite, split protocols, ridge baseline, experiment sweeps and
//! checkpoints.

pub mod error;
pub mod evaluation;
pub mod features;
pub mod io;
pub mod model;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use evaluation::{MetricsReport, RunMetrics};
pub use features::{EncodedRow, FeatureEncoder, FeatureSchema};
pub use model::{ArchConfig, EapcrParams, ModelConfig, PermutationSpec};
pub use tensor::{Gradients, Tape, Tensor, Var};
pub use trainer::{TargetScaler, TrainConfig};
