//! Learning the configuration-to-partitioning map: feature encoding, decision
//! trees, and the row-then-column chained classifier.

mod chained;
mod features;
mod model_io;
mod tree;

use thiserror::Error;

pub use chained::{fit_chained, ChainedModel, LearnerParams, TrainingRange};
pub use features::{
    FeatureKind, FeatureSchema, FeatureSpec, CATEGORICAL_FEATURES, CHAINED_FEATURE, NUMERIC_FEATURES, UNKNOWN,
};
pub use model_io::{deserialize_model, serialize_model, ModelFormatError, MODEL_FORMAT_VERSION};
pub use tree::{fit_tree, gini, split_score, DecisionTree, Node, SplitTest, TreeParams};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LearnError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("feature row has {found} values, schema expects {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("feature values must be finite")]
    NonFiniteFeature,
    #[error("label {label} is outside [1, {max_partitions}]")]
    LabelOutOfRange { label: u64, max_partitions: u64 },
    #[error("max_partitions_factor must be at least 1")]
    InvalidFactor,
}
