//! Log -> training set -> model -> recommendation, at both float widths.

use blockwise_core::domain::{ExecutionRecord, Time};
use blockwise_core::extraction::{extract_training_set, read_training_set, write_training_set};
use blockwise_core::gridsearch::{run_grid_search, PresetExecutor, SearchOptions};
use blockwise_core::learner::{deserialize_model, fit_chained, serialize_model, LearnerParams, ModelFormatError};
use blockwise_core::log_ingest::{ingest, serialize_record, ParseMode};
use blockwise_core::num::Scalar;
use blockwise_core::{
    recommend, AlgorithmDescriptor, DatasetDescriptor, EnvironmentDescriptor, Mode, Partitioning, TaskKind,
};

fn configurations() -> Vec<(DatasetDescriptor, AlgorithmDescriptor, EnvironmentDescriptor)> {
    let mut out = Vec::new();
    for (algo, task) in [("kmeans", TaskKind::Clustering), ("svm", TaskKind::Classification)] {
        for rows in [20_000u64, 200_000, 2_000_000] {
            for cols in [100u64, 5_000] {
                out.push((
                    DatasetDescriptor::new(rows, cols).unwrap(),
                    AlgorithmDescriptor::new(algo, task, Mode::Train).unwrap(),
                    EnvironmentDescriptor::new(2, 16, 64_000_000_000).unwrap(),
                ));
            }
        }
    }
    out
}

/// Writes every grid trial as a log line, the way a real sweep would be logged.
fn write_log<T: Scalar>(path: &std::path::Path) -> Vec<Partitioning> {
    let exec = PresetExecutor::<T> { noise_rel: T::zero(), seed: 1 };
    let mut text = String::new();
    let mut best = Vec::new();
    for (d, a, e) in configurations() {
        let out = run_grid_search(&d, &a, &e, &exec, SearchOptions::default(), None, |_| {}).unwrap();
        for (p, t) in out.grid.trials() {
            let r = ExecutionRecord {
                dataset: d,
                algorithm: a.clone(),
                environment: e,
                partitioning: p,
                time: t,
                extras: vec![],
            };
            text.push_str(&serialize_record(&r));
            text.push('\n');
        }
        best.push(out.example.best);
    }
    std::fs::write(path, text).unwrap();
    best
}

fn run<T: Scalar>(dir: &std::path::Path) -> (Vec<Partitioning>, Vec<Partitioning>, Vec<u8>) {
    let log = dir.join(format!("{}.log", T::NAME));
    let grid_best = write_log::<T>(&log);
    let ingested = ingest::<T>(&log, ParseMode::Strict).unwrap();
    assert_eq!(ingested.skipped, 0);
    let extraction = extract_training_set(&ingested.records);
    let text = write_training_set(&extraction.examples);
    let examples = read_training_set::<T, _>(text.as_bytes()).unwrap();
    assert_eq!(examples, extraction.examples);

    let params = LearnerParams { tree: blockwise_core::TreeParams::unlimited(), ..LearnerParams::default() };
    let model = fit_chained(&examples, params, 2).unwrap();
    let bytes = serialize_model(&model);
    let model = deserialize_model::<T>(&bytes).unwrap();
    let recommended = configurations().iter().map(|(d, a, e)| recommend(&model, d, a, e).partitioning).collect();
    (grid_best, recommended, bytes)
}

#[test]
fn memorizes_its_own_sweeps_at_both_widths() {
    let dir = tempfile::tempdir().unwrap();
    let (best64, rec64, bytes64) = run::<f64>(dir.path());
    let (best32, rec32, bytes32) = run::<f32>(dir.path());
    assert_eq!(rec64, best64);
    assert_eq!(rec32, best32);
    assert!(matches!(deserialize_model::<f32>(&bytes64), Err(ModelFormatError::CorruptModel(_))));
    assert!(deserialize_model::<f64>(&bytes32).is_err());
}

#[test]
fn failed_runs_never_become_labels() {
    let dir = tempfile::tempdir().unwrap();
    let d = DatasetDescriptor::new(1_000_000, 1_000).unwrap();
    let a = AlgorithmDescriptor::new("pca", TaskKind::DimReduction, Mode::Train).unwrap();
    // 100 MB per core: anything with blocks above 100 MB fails.
    let e = EnvironmentDescriptor::new(1, 16, 1_600_000_000).unwrap();
    let exec = PresetExecutor::<f64> { noise_rel: 0.0, seed: 0 };
    let out = run_grid_search(&d, &a, &e, &exec, SearchOptions::default(), None, |_| {}).unwrap();
    let failed = out.grid.trials().filter(|(_, t)| t.is_failed()).count();
    assert!(failed > 0);
    let log = dir.path().join("runs.log");
    let text: String = out
        .grid
        .trials()
        .map(|(p, t)| {
            let r = ExecutionRecord {
                dataset: d,
                algorithm: a.clone(),
                environment: e,
                partitioning: p,
                time: t,
                extras: vec![],
            };
            serialize_record(&r) + "\n"
        })
        .collect();
    std::fs::write(&log, text).unwrap();
    let records = ingest::<f64>(&log, ParseMode::Strict).unwrap().records;
    assert_eq!(records.iter().filter(|r| r.time == Time::Failed).count(), failed);
    let extraction = extract_training_set(&records);
    assert_eq!(extraction.examples.len(), 1);
    assert_eq!(extraction.examples[0].best, out.example.best);
    let block_bytes = d.rows().div_ceil(out.example.best.p_r()) * d.cols().div_ceil(out.example.best.p_c()) * 8;
    assert!(block_bytes <= e.memory_per_core_bytes());
}
