//! Descriptors for dataset, algorithm and environment, partitionings, block
//! sizes, and the block-size formula that ties them together.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::num::Scalar;

/// Element width assumed when a log does not state one (double precision).
pub const DEFAULT_ELEMENT_BYTES: u32 = 8;

/// Literal used for failed runs in every serialized form.
pub const FAILED_LITERAL: &str = "FAILED";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("invalid {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("partitioning {p_r}x{p_c} exceeds dataset dimensions {rows}x{cols}")]
    PartitionExceedsDimension { p_r: u64, p_c: u64, rows: u64, cols: u64 },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> DomainError {
    DomainError::InvalidField { field, reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DatasetDescriptor {
    rows: u64,
    cols: u64,
    size_bytes: u64,
    element_bytes: Option<u32>,
}

impl DatasetDescriptor {
    /// Dataset of `rows` x `cols` with unknown footprint and default element width.
    pub fn new(rows: u64, cols: u64) -> Result<Self, DomainError> {
        Self::with_details(rows, cols, 0, None)
    }

    /// Full constructor. `size_bytes = 0` means the footprint is unknown; the
    /// footprint is only cross-checked against the shape when the element
    /// width is stated explicitly.
    pub fn with_details(
        rows: u64,
        cols: u64,
        size_bytes: u64,
        element_bytes: Option<u32>,
    ) -> Result<Self, DomainError> {
        if rows == 0 {
            return Err(invalid("rows", "must be at least 1"));
        }
        if cols == 0 {
            return Err(invalid("cols", "must be at least 1"));
        }
        if element_bytes == Some(0) {
            return Err(invalid("element_bytes", "must be positive"));
        }
        if let (true, Some(eb)) = (size_bytes != 0, element_bytes) {
            let expected = rows as f64 * cols as f64 * eb as f64;
            if (size_bytes as f64 - expected).abs() > 0.01 * expected {
                return Err(invalid(
                    "size_bytes",
                    format!("{size_bytes} disagrees with {rows}x{cols}x{eb} bytes by more than 1%"),
                ));
            }
        }
        Ok(Self { rows, cols, size_bytes, element_bytes })
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn cols(&self) -> u64 {
        self.cols
    }

    pub fn size_bytes(&self) -> u64 {
        self.size_bytes
    }

    pub fn element_bytes(&self) -> u32 {
        self.element_bytes.unwrap_or(DEFAULT_ELEMENT_BYTES)
    }

    /// The element width as recorded, `None` when it was defaulted.
    pub fn declared_element_bytes(&self) -> Option<u32> {
        self.element_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskKind {
    Classification,
    Clustering,
    DimReduction,
    Other,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] =
        [TaskKind::Classification, TaskKind::Clustering, TaskKind::DimReduction, TaskKind::Other];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::Clustering => "clustering",
            TaskKind::DimReduction => "dim_reduction",
            TaskKind::Other => "other",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid("task_kind", format!("unknown task kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Train,
    Inference,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Train, Mode::Inference];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::Inference => "inference",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid("mode", format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AlgorithmDescriptor {
    name: String,
    task_kind: TaskKind,
    mode: Mode,
}

impl AlgorithmDescriptor {
    /// The name is trimmed and lowercased. It may not be empty or contain
    /// tabs or line breaks, since it travels through tab-separated files.
    pub fn new(name: &str, task_kind: TaskKind, mode: Mode) -> Result<Self, DomainError> {
        let name = name.trim().to_lowercase();
        if name.is_empty() {
            return Err(invalid("algorithm", "name is empty"));
        }
        if name.contains(['\t', '\n', '\r']) {
            return Err(invalid("algorithm", "name contains a tab or line break"));
        }
        Ok(Self { name, task_kind, mode })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnvironmentDescriptor {
    nodes: u64,
    cores_per_node: u64,
    ram_per_node_bytes: u64,
    total_cores: u64,
}

impl EnvironmentDescriptor {
    pub fn new(nodes: u64, cores_per_node: u64, ram_per_node_bytes: u64) -> Result<Self, DomainError> {
        if nodes == 0 {
            return Err(invalid("nodes", "must be at least 1"));
        }
        if cores_per_node == 0 {
            return Err(invalid("cores_per_node", "must be at least 1"));
        }
        if ram_per_node_bytes == 0 {
            return Err(invalid("ram_per_node_bytes", "must be positive"));
        }
        let total_cores =
            nodes.checked_mul(cores_per_node).ok_or_else(|| invalid("cores_per_node", "total core count overflows"))?;
        Ok(Self { nodes, cores_per_node, ram_per_node_bytes, total_cores })
    }

    pub fn nodes(&self) -> u64 {
        self.nodes
    }

    pub fn cores_per_node(&self) -> u64 {
        self.cores_per_node
    }

    pub fn ram_per_node_bytes(&self) -> u64 {
        self.ram_per_node_bytes
    }

    pub fn total_cores(&self) -> u64 {
        self.total_cores
    }

    /// Memory a single task may use: the node's RAM shared evenly by its cores.
    pub fn memory_per_core_bytes(&self) -> u64 {
        self.ram_per_node_bytes / self.cores_per_node
    }
}

/// Number of splits along rows (`p_r`) and columns (`p_c`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partitioning {
    p_r: u64,
    p_c: u64,
}

impl Partitioning {
    pub fn new(p_r: u64, p_c: u64) -> Result<Self, DomainError> {
        if p_r == 0 {
            return Err(invalid("p_r", "must be at least 1"));
        }
        if p_c == 0 {
            return Err(invalid("p_c", "must be at least 1"));
        }
        Ok(Self { p_r, p_c })
    }

    pub fn p_r(&self) -> u64 {
        self.p_r
    }

    pub fn p_c(&self) -> u64 {
        self.p_c
    }

    pub fn total_blocks(&self) -> u64 {
        self.p_r.saturating_mul(self.p_c)
    }
}

impl fmt::Display for Partitioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.p_r, self.p_c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockSize {
    pub block_rows: u64,
    pub block_cols: u64,
}

impl BlockSize {
    pub fn elements(&self) -> u64 {
        self.block_rows.saturating_mul(self.block_cols)
    }

    pub fn bytes(&self, element_bytes: u32) -> u64 {
        self.elements().saturating_mul(element_bytes as u64)
    }
}

/// Block shape for `part` on `dataset`. Non-divisible axes use ceiling
/// division, so the last block along an axis may be smaller than the rest.
pub fn block_size(dataset: &DatasetDescriptor, part: Partitioning) -> Result<BlockSize, DomainError> {
    if part.p_r > dataset.rows || part.p_c > dataset.cols {
        return Err(DomainError::PartitionExceedsDimension {
            p_r: part.p_r,
            p_c: part.p_c,
            rows: dataset.rows,
            cols: dataset.cols,
        });
    }
    Ok(BlockSize { block_rows: dataset.rows.div_ceil(part.p_r), block_cols: dataset.cols.div_ceil(part.p_c) })
}

pub fn clamp_partitioning(dataset: &DatasetDescriptor, part: Partitioning) -> Partitioning {
    Partitioning { p_r: part.p_r.min(dataset.rows), p_c: part.p_c.min(dataset.cols) }
}

/// Per-core memory rule: a block must fit in the memory available to one core.
pub fn block_fits_in_core_memory(dataset: &DatasetDescriptor, env: &EnvironmentDescriptor, block: BlockSize) -> bool {
    block.bytes(dataset.element_bytes()) <= env.memory_per_core_bytes()
}

/// Outcome of one execution: a finite positive duration, or a failure.
/// Failures order after every finite time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Time<T> {
    Finite(T),
    Failed,
}

impl<T: Scalar> Time<T> {
    pub fn finite(seconds: T) -> Result<Self, DomainError> {
        if seconds.is_finite() && seconds > T::zero() {
            Ok(Time::Finite(seconds))
        } else {
            Err(invalid("time_seconds", format!("{seconds} is not a finite positive duration")))
        }
    }

    pub fn seconds(&self) -> Option<T> {
        match *self {
            Time::Finite(t) => Some(t),
            Time::Failed => None,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, Time::Failed)
    }

    pub fn parse(s: &str) -> Result<Self, DomainError> {
        if s == FAILED_LITERAL {
            return Ok(Time::Failed);
        }
        let t = T::parse_decimal(s).ok_or_else(|| invalid("time_seconds", format!("{s:?} is not a decimal number")))?;
        Self::finite(t)
    }
}

impl<T: Scalar> fmt::Display for Time<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Time::Finite(t) => write!(f, "{t}"),
            Time::Failed => f.write_str(FAILED_LITERAL),
        }
    }
}

// Finite values are never NaN (enforced by `Time::finite`), so the order is total.
impl<T: Scalar> Eq for Time<T> {}

impl<T: Scalar> PartialOrd for Time<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Time<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Time::Finite(a), Time::Finite(b)) => a.partial_cmp(b).unwrap_or(Ordering::Equal),
            (Time::Finite(_), Time::Failed) => Ordering::Less,
            (Time::Failed, Time::Finite(_)) => Ordering::Greater,
            (Time::Failed, Time::Failed) => Ordering::Equal,
        }
    }
}

/// One logged run: the configuration, the partitioning used, and how long it took.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionRecord<T> {
    pub dataset: DatasetDescriptor,
    pub algorithm: AlgorithmDescriptor,
    pub environment: EnvironmentDescriptor,
    pub partitioning: Partitioning,
    pub time: Time<T>,
    /// Additional measurements carried through untouched (memory, disk, timestamps).
    pub extras: Vec<String>,
}
