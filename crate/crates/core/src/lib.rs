//! Block-size advice for distributed array workloads: ingest execution logs,
//! extract the best partitioning per configuration, fit a chained decision
//! tree model and query it.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`.

pub mod advisor;
pub mod domain;
pub mod extraction;
pub mod gridsearch;
pub mod learner;
pub mod log_ingest;
pub mod metrics;
pub mod num;
pub mod simulator;

pub use advisor::{recommend, Advisor, AdvisorError, Axis, Recommendation, Warning};
pub use domain::{
    block_size, clamp_partitioning, AlgorithmDescriptor, BlockSize, DatasetDescriptor, DomainError,
    EnvironmentDescriptor, Mode, Partitioning, TaskKind,
};
pub use extraction::ConfigurationKey;
pub use gridsearch::{CommandExecutor, Executor, ExecutorError, GridError, GridShape, SearchOptions};
pub use learner::{LearnError, LearnerParams, ModelFormatError, TreeParams};
pub use log_ingest::{IngestError, ParseMode};
pub use metrics::MetricsError;
pub use num::Scalar;
pub use simulator::CostModelError;

pub type Time = domain::Time<f64>;
pub type ExecutionRecord = domain::ExecutionRecord<f64>;
pub type TrainingExample = extraction::TrainingExample<f64>;
pub type Extraction = extraction::Extraction<f64>;
pub type Ingested = log_ingest::Ingested<f64>;
pub type CostModelParams = simulator::CostModelParams<f64>;
pub type SimulatedExecutor = gridsearch::SimulatedExecutor<f64>;
pub type PresetExecutor = gridsearch::PresetExecutor<f64>;
pub type SearchGrid = gridsearch::SearchGrid<f64>;
pub type SearchOutcome = gridsearch::SearchOutcome<f64>;
pub type DecisionTree = learner::DecisionTree<f64>;
pub type ChainedModel = learner::ChainedModel<f64>;
pub type MakespanComparison = metrics::MakespanComparison<f64>;
pub type ComparisonSummary = metrics::ComparisonSummary<f64>;
