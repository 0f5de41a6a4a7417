//! Answering "which block size should this run use?" from a fitted model.

use std::fmt;

use thiserror::Error;

use crate::domain::{
    block_fits_in_core_memory, block_size, clamp_partitioning, AlgorithmDescriptor, BlockSize, DatasetDescriptor,
    EnvironmentDescriptor, Partitioning,
};
use crate::extraction::ConfigurationKey;
use crate::learner::ChainedModel;
use crate::num::Scalar;

/// Queries this far outside the training range (either direction) are flagged.
pub const EXTRAPOLATION_FACTOR: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdvisorError {
    #[error("no model has been fitted or loaded")]
    ModelNotFitted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    UnknownCategory { feature: String, value: String },
    Clamped { axis: Axis, predicted: u64, clamped: u64 },
    Extrapolated { axis: Axis, value: u64, trained_min: u64, trained_max: u64 },
    BlockExceedsCoreMemory { block_bytes: u64, per_core_bytes: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Rows => "rows",
            Axis::Cols => "cols",
        })
    }
}

// Compact, space-free forms so warnings can be `;`-joined on one line.
impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::UnknownCategory { feature, value } => write!(f, "unknown_{feature}={value}"),
            Warning::Clamped { axis, predicted, clamped } => write!(f, "clamped_{axis}={predicted}->{clamped}"),
            Warning::Extrapolated { axis, value, trained_min, trained_max } => {
                write!(f, "extrapolated_{axis}={value}[trained:{trained_min}..{trained_max}]")
            }
            Warning::BlockExceedsCoreMemory { block_bytes, per_core_bytes } => {
                write!(f, "block_memory={block_bytes}B>{per_core_bytes}B_per_core")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recommendation {
    pub partitioning: Partitioning,
    pub block: BlockSize,
    pub total_blocks: u64,
    pub warnings: Vec<Warning>,
}

impl Recommendation {
    /// `p_r=.. p_c=.. block_rows=.. block_cols=.. blocks=.. warnings=a;b`
    pub fn machine_line(&self) -> String {
        let warnings: Vec<String> = self.warnings.iter().map(Warning::to_string).collect();
        format!(
            "p_r={} p_c={} block_rows={} block_cols={} blocks={} warnings={}",
            self.partitioning.p_r(),
            self.partitioning.p_c(),
            self.block.block_rows,
            self.block.block_cols,
            self.total_blocks,
            warnings.join(";")
        )
    }
}

impl fmt::Display for Recommendation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "partitioning: {} x {} ({} blocks)",
            self.partitioning.p_r(),
            self.partitioning.p_c(),
            self.total_blocks
        )?;
        writeln!(f, "block size:   {} rows x {} cols", self.block.block_rows, self.block.block_cols)?;
        if self.warnings.is_empty() {
            write!(f, "warnings:     none")
        } else {
            write!(f, "warnings:")?;
            for w in &self.warnings {
                write!(f, "\n  - {w}")?;
            }
            Ok(())
        }
    }
}

fn extrapolation(axis: Axis, value: u64, (lo, hi): (u64, u64)) -> Option<Warning> {
    let below = value.saturating_mul(EXTRAPOLATION_FACTOR) < lo;
    let above = value > hi.saturating_mul(EXTRAPOLATION_FACTOR);
    (below || above).then_some(Warning::Extrapolated { axis, value, trained_min: lo, trained_max: hi })
}

/// Predicts, clamps to the dataset, and converts to a block size. Problems
/// with the answer become warnings; the call itself never fails.
pub fn recommend<T: Scalar>(
    model: &ChainedModel<T>,
    d: &DatasetDescriptor,
    a: &AlgorithmDescriptor,
    e: &EnvironmentDescriptor,
) -> Recommendation {
    let key = ConfigurationKey::new(d, a, e);
    let mut warnings: Vec<Warning> = model
        .schema()
        .unknown_categories(&key)
        .into_iter()
        .map(|(feature, value)| Warning::UnknownCategory { feature, value })
        .collect();

    let raw = model.predict_unclamped(&key);
    let partitioning = clamp_partitioning(d, raw);
    if partitioning.p_r() != raw.p_r() {
        warnings.push(Warning::Clamped { axis: Axis::Rows, predicted: raw.p_r(), clamped: partitioning.p_r() });
    }
    if partitioning.p_c() != raw.p_c() {
        warnings.push(Warning::Clamped { axis: Axis::Cols, predicted: raw.p_c(), clamped: partitioning.p_c() });
    }

    let range = model.training_range();
    warnings.extend(extrapolation(Axis::Rows, d.rows(), range.rows));
    warnings.extend(extrapolation(Axis::Cols, d.cols(), range.cols));

    let block = block_size(d, partitioning).expect("clamped partitioning always fits the dataset");
    if !block_fits_in_core_memory(d, e, block) {
        warnings.push(Warning::BlockExceedsCoreMemory {
            block_bytes: block.bytes(d.element_bytes()),
            per_core_bytes: e.memory_per_core_bytes(),
        });
    }

    Recommendation { partitioning, block, total_blocks: partitioning.total_blocks(), warnings }
}

/// Holder for an optional model, for front ends that may be asked for a
/// recommendation before anything was trained or loaded.
#[derive(Debug, Clone, Default)]
pub struct Advisor<T> {
    model: Option<ChainedModel<T>>,
}

impl<T: Scalar> Advisor<T> {
    pub fn new() -> Self {
        Self { model: None }
    }

    pub fn with_model(model: ChainedModel<T>) -> Self {
        Self { model: Some(model) }
    }

    pub fn set_model(&mut self, model: ChainedModel<T>) {
        self.model = Some(model);
    }

    pub fn model(&self) -> Option<&ChainedModel<T>> {
        self.model.as_ref()
    }

    pub fn recommend(
        &self,
        d: &DatasetDescriptor,
        a: &AlgorithmDescriptor,
        e: &EnvironmentDescriptor,
    ) -> Result<Recommendation, AdvisorError> {
        let model = self.model.as_ref().ok_or(AdvisorError::ModelNotFitted)?;
        Ok(recommend(model, d, a, e))
    }
}
