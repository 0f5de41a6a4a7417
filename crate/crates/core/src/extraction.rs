//! Builds the training set from a log: group runs by configuration and keep
//! the partitioning with the lowest execution time.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use thiserror::Error;

use crate::domain::{
    AlgorithmDescriptor, DatasetDescriptor, DomainError, EnvironmentDescriptor, ExecutionRecord, Partitioning, Time,
};
use crate::log_ingest::FORMAT_TAG;
use crate::num::Scalar;

/// Identity of an execution setting ⟨dataset, algorithm, environment⟩.
///
/// Element width is not part of the key; two logs that disagree only on it
/// describe the same configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConfigurationKey {
    pub rows: u64,
    pub cols: u64,
    pub size_bytes: u64,
    pub algorithm: AlgorithmDescriptor,
    pub environment: EnvironmentDescriptor,
}

impl ConfigurationKey {
    pub fn new(
        dataset: &DatasetDescriptor,
        algorithm: &AlgorithmDescriptor,
        environment: &EnvironmentDescriptor,
    ) -> Self {
        Self {
            rows: dataset.rows(),
            cols: dataset.cols(),
            size_bytes: dataset.size_bytes(),
            algorithm: algorithm.clone(),
            environment: *environment,
        }
    }

    pub fn of_record<T>(r: &ExecutionRecord<T>) -> Self {
        Self::new(&r.dataset, &r.algorithm, &r.environment)
    }

    pub fn dataset(&self) -> DatasetDescriptor {
        DatasetDescriptor::with_details(self.rows, self.cols, self.size_bytes, None)
            .expect("key dimensions were validated on construction")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample<T> {
    pub key: ConfigurationKey,
    pub best: Partitioning,
    pub best_time: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction<T> {
    /// One example per configuration, sorted by key.
    pub examples: Vec<TrainingExample<T>>,
    /// Configurations whose every run failed.
    pub dropped_groups: usize,
}

/// Total preference order over trials: faster first; at equal time, fewer
/// blocks, then fewer row splits, then fewer column splits.
pub fn trial_order<T: Scalar>(a: (Partitioning, Time<T>), b: (Partitioning, Time<T>)) -> Ordering {
    a.1.cmp(&b.1)
        .then_with(|| a.0.total_blocks().cmp(&b.0.total_blocks()))
        .then_with(|| a.0.p_r().cmp(&b.0.p_r()))
        .then_with(|| a.0.p_c().cmp(&b.0.p_c()))
}

/// Best trial under [`trial_order`], `None` when every trial failed.
pub fn best_trial<T: Scalar>(trials: impl IntoIterator<Item = (Partitioning, Time<T>)>) -> Option<(Partitioning, T)> {
    trials
        .into_iter()
        .filter(|(_, t)| !t.is_failed())
        .min_by(|a, b| trial_order(*a, *b))
        .map(|(p, t)| (p, t.seconds().expect("failed trials filtered")))
}

pub fn extract_training_set<T: Scalar>(records: &[ExecutionRecord<T>]) -> Extraction<T> {
    let mut groups: BTreeMap<ConfigurationKey, Vec<(Partitioning, Time<T>)>> = BTreeMap::new();
    for r in records {
        groups.entry(ConfigurationKey::of_record(r)).or_default().push((r.partitioning, r.time));
    }

    let mut examples = Vec::with_capacity(groups.len());
    let mut dropped_groups = 0;
    for (key, mut trials) in groups {
        trials.sort_by(|a, b| trial_order(*a, *b));
        trials.dedup();
        match best_trial(trials) {
            Some((best, best_time)) => examples.push(TrainingExample { key, best, best_time }),
            None => dropped_groups += 1,
        }
    }
    Extraction { examples, dropped_groups }
}

#[derive(Debug, Error)]
pub enum TrainingSetError {
    #[error("line {line_no}: {reason}")]
    Malformed { line_no: usize, reason: String },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// One example per line:
/// `v1 algo task_kind mode rows cols size_bytes nodes cores_per_node ram_per_node_bytes p_r p_c best_time`.
pub fn serialize_example<T: Scalar>(ex: &TrainingExample<T>) -> String {
    let k = &ex.key;
    let mut s = String::new();
    write!(
        s,
        "{FORMAT_TAG}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        k.algorithm.name(),
        k.algorithm.task_kind(),
        k.algorithm.mode(),
        k.rows,
        k.cols,
        k.size_bytes,
        k.environment.nodes(),
        k.environment.cores_per_node(),
        k.environment.ram_per_node_bytes(),
        ex.best.p_r(),
        ex.best.p_c(),
        ex.best_time
    )
    .expect("writing to a String cannot fail");
    s
}

pub fn parse_example<T: Scalar>(line: &str) -> Result<TrainingExample<T>, String> {
    let f: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('\t').collect();
    if f.len() != 13 {
        return Err(format!("expected 13 tab-separated fields, found {}", f.len()));
    }
    if f[0] != FORMAT_TAG {
        return Err(format!("unsupported format tag {:?}", f[0]));
    }
    let int = |i: usize| f[i].parse::<u64>().map_err(|_| format!("field {} ({:?}) is not an integer", i + 1, f[i]));
    let de = |e: DomainError| e.to_string();
    let algorithm = AlgorithmDescriptor::new(f[1], f[2].parse().map_err(de)?, f[3].parse().map_err(de)?).map_err(de)?;
    let dataset = DatasetDescriptor::with_details(int(4)?, int(5)?, int(6)?, None).map_err(de)?;
    let environment = EnvironmentDescriptor::new(int(7)?, int(8)?, int(9)?).map_err(de)?;
    let best = Partitioning::new(int(10)?, int(11)?).map_err(de)?;
    let best_time = match Time::<T>::parse(f[12]).map_err(de)? {
        Time::Finite(t) => t,
        Time::Failed => return Err("best_time cannot be FAILED".into()),
    };
    Ok(TrainingExample { key: ConfigurationKey::new(&dataset, &algorithm, &environment), best, best_time })
}

pub fn write_training_set<T: Scalar>(examples: &[TrainingExample<T>]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serialize_example(ex));
        out.push('\n');
    }
    out
}

pub fn read_training_set<T: Scalar, R: BufRead>(reader: R) -> Result<Vec<TrainingExample<T>>, TrainingSetError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(parse_example(&line).map_err(|reason| TrainingSetError::Malformed { line_no: idx + 1, reason })?);
    }
    Ok(out)
}
