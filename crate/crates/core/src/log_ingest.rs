//! Reading and writing execution logs.
//!
//! One record per line, tab-separated, fields in this order:
//!
//! ```text
//! v1 algo task_kind mode rows cols size_bytes elem_bytes nodes cores_per_node ram_per_node_bytes p_r p_c time [extras...]
//! ```
//!
//! `elem_bytes` may be `-` when the log does not know it. `time` is a decimal
//! number of seconds or `FAILED`. Blank lines and lines starting with `#` are
//! skipped.

use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::domain::{
    AlgorithmDescriptor, DatasetDescriptor, DomainError, EnvironmentDescriptor, ExecutionRecord, Partitioning, Time,
};
use crate::num::Scalar;

pub const FORMAT_TAG: &str = "v1";
const FIXED_FIELDS: usize = 14;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line_no}: malformed record: {reason}")]
    MalformedRecord { line_no: usize, reason: String },
    #[error("line {line_no}: invalid {name}: {reason}")]
    InvalidField { line_no: usize, name: String, reason: String },
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
}

impl IngestError {
    fn at_line(self, n: usize) -> Self {
        match self {
            IngestError::MalformedRecord { reason, .. } => IngestError::MalformedRecord { line_no: n, reason },
            IngestError::InvalidField { name, reason, .. } => IngestError::InvalidField { line_no: n, name, reason },
            other => other,
        }
    }

    pub fn line_no(&self) -> Option<usize> {
        match self {
            IngestError::MalformedRecord { line_no, .. } | IngestError::InvalidField { line_no, .. } => Some(*line_no),
            IngestError::Io(_) => None,
        }
    }
}

impl From<DomainError> for IngestError {
    fn from(e: DomainError) -> Self {
        match e {
            DomainError::InvalidField { field, reason } => {
                IngestError::InvalidField { line_no: 0, name: field.to_string(), reason }
            }
            other => IngestError::InvalidField { line_no: 0, name: "record".into(), reason: other.to_string() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Skip undecodable lines and count them.
    #[default]
    Lenient,
    /// Abort on the first undecodable line.
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested<T> {
    pub records: Vec<ExecutionRecord<T>>,
    pub skipped: usize,
    /// Line number and diagnostic for every skipped line (lenient mode only).
    pub diagnostics: Vec<(usize, String)>,
}

fn malformed(reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRecord { line_no: 0, reason: reason.into() }
}

fn int_field(name: &'static str, raw: &str) -> Result<u64, IngestError> {
    raw.parse::<u64>().map_err(|_| IngestError::InvalidField {
        line_no: 0,
        name: name.to_string(),
        reason: format!("{raw:?} is not a non-negative integer"),
    })
}

/// Decodes a single log line. Error line numbers are 0; [`ingest`] fills them in.
pub fn parse_record<T: Scalar>(line: &str) -> Result<ExecutionRecord<T>, IngestError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < FIXED_FIELDS {
        return Err(malformed(format!(
            "expected at least {FIXED_FIELDS} tab-separated fields, found {}",
            fields.len()
        )));
    }
    if fields[0] != FORMAT_TAG {
        return Err(malformed(format!("unsupported format tag {:?}", fields[0])));
    }
    if let Some(i) = fields.iter().position(|f| f.is_empty()) {
        return Err(malformed(format!("field {} is empty", i + 1)));
    }

    let algorithm = AlgorithmDescriptor::new(fields[1], fields[2].parse()?, fields[3].parse()?)?;
    let elem_bytes = match fields[7] {
        "-" => None,
        raw => Some(u32::try_from(int_field("elem_bytes", raw)?).map_err(|_| IngestError::InvalidField {
            line_no: 0,
            name: "elem_bytes".into(),
            reason: "too large".into(),
        })?),
    };
    let dataset = DatasetDescriptor::with_details(
        int_field("rows", fields[4])?,
        int_field("cols", fields[5])?,
        int_field("size_bytes", fields[6])?,
        elem_bytes,
    )?;
    let environment = EnvironmentDescriptor::new(
        int_field("nodes", fields[8])?,
        int_field("cores_per_node", fields[9])?,
        int_field("ram_per_node_bytes", fields[10])?,
    )?;
    let partitioning = Partitioning::new(int_field("p_r", fields[11])?, int_field("p_c", fields[12])?)?;
    let time = Time::parse(fields[13])?;
    let extras = fields[FIXED_FIELDS..].iter().map(|s| s.to_string()).collect();

    Ok(ExecutionRecord { dataset, algorithm, environment, partitioning, time, extras })
}

/// Encodes a record as one log line (no trailing newline).
pub fn serialize_record<T: Scalar>(r: &ExecutionRecord<T>) -> String {
    let elem = match r.dataset.declared_element_bytes() {
        Some(b) => b.to_string(),
        None => "-".to_string(),
    };
    let mut fields = vec![
        FORMAT_TAG.to_string(),
        r.algorithm.name().to_string(),
        r.algorithm.task_kind().to_string(),
        r.algorithm.mode().to_string(),
        r.dataset.rows().to_string(),
        r.dataset.cols().to_string(),
        r.dataset.size_bytes().to_string(),
        elem,
        r.environment.nodes().to_string(),
        r.environment.cores_per_node().to_string(),
        r.environment.ram_per_node_bytes().to_string(),
        r.partitioning.p_r().to_string(),
        r.partitioning.p_c().to_string(),
        r.time.to_string(),
    ];
    fields.extend(r.extras.iter().cloned());
    fields.join("\t")
}

pub fn ingest_reader<T: Scalar, R: BufRead>(reader: R, mode: ParseMode) -> Result<Ingested<T>, IngestError> {
    let mut out = Ingested { records: Vec::new(), skipped: 0, diagnostics: Vec::new() };
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_record(&line) {
            Ok(r) => out.records.push(r),
            Err(e) => match mode {
                ParseMode::Strict => return Err(e.at_line(line_no)),
                ParseMode::Lenient => {
                    out.skipped += 1;
                    out.diagnostics.push((line_no, e.at_line(line_no).to_string()));
                }
            },
        }
    }
    Ok(out)
}

pub fn ingest<T: Scalar>(path: impl AsRef<Path>, mode: ParseMode) -> Result<Ingested<T>, IngestError> {
    let file = File::open(path)?;
    ingest_reader(BufReader::new(file), mode)
}
