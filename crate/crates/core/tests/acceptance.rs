//! Acceptance suite. Each test prints one `PASS`/`FAIL` line and then asserts.

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use blockwise_core::domain::Time;
use blockwise_core::extraction::{extract_training_set, write_training_set};
use blockwise_core::gridsearch::{grid_shape, run_grid_search, Executor, PresetExecutor, SearchOptions};
use blockwise_core::learner::{deserialize_model, fit_chained, serialize_model, LearnerParams, TreeParams};
use blockwise_core::log_ingest::{ingest, serialize_record, ParseMode};
use blockwise_core::metrics::{compare, makespan_ratio, makespan_reduction, summarize};
use blockwise_core::simulator::simulate_execution;
use blockwise_core::{
    recommend, AlgorithmDescriptor, BlockSize, ChainedModel, ConfigurationKey, CostModelParams, DatasetDescriptor,
    EnvironmentDescriptor, ExecutionRecord, Mode, Partitioning, SearchGrid, TaskKind, TrainingExample,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORKED_EXAMPLE_BUDGET: Duration = Duration::from_secs(1);
const TABLE_BUDGET: Duration = Duration::from_secs(1);
const MEAN_RATIO_TARGET: f64 = 1.27;
const MEAN_RATIO_TOL: f64 = 0.005;
const MEAN_REDUCTION_TARGET_PCT: f64 = 14.92;
const MEAN_REDUCTION_TOL_PP: f64 = 0.05;
const IDENTITY_CASES: u32 = 10_000;
const IDENTITY_TOL: f64 = 1e-12;
const ORACLE_SEARCHES: usize = 200;
const ORACLE_BUDGET: Duration = Duration::from_secs(30);
const PIPELINE_TRAIN: usize = 500;
const PIPELINE_HELD_OUT: usize = 50;
const PIPELINE_WITHIN_FACTOR: f64 = 1.3;
const PIPELINE_WITHIN_SHARE: f64 = 0.80;
const PIPELINE_MIN_RATIO_VS_WORST: f64 = 1.5;
const PIPELINE_BUDGET: Duration = Duration::from_secs(300);
const LATENCY_CALLS: usize = 1000;
const LATENCY_MEDIAN_LIMIT: Duration = Duration::from_millis(10);

fn report(n: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {n:>2} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

fn algo(name: &str) -> AlgorithmDescriptor {
    let task = match name {
        "kmeans" | "gmm" => TaskKind::Clustering,
        "pca" => TaskKind::DimReduction,
        _ => TaskKind::Classification,
    };
    AlgorithmDescriptor::new(name, task, Mode::Train).unwrap()
}

fn part(p_r: u64, p_c: u64) -> Partitioning {
    Partitioning::new(p_r, p_c).unwrap()
}

fn example(
    d: DatasetDescriptor,
    a: &AlgorithmDescriptor,
    e: &EnvironmentDescriptor,
    best: Partitioning,
) -> TrainingExample {
    TrainingExample { key: ConfigurationKey::new(&d, a, e), best, best_time: 1.0 }
}

#[test]
fn criterion_01_worked_example() {
    let start = Instant::now();
    let e = EnvironmentDescriptor::new(4, 16, 256_000_000_000).unwrap();
    let svm = algo("svm");
    let query = DatasetDescriptor::new(51_200, 256).unwrap();
    let fixture = [
        example(query, &svm, &e, part(4, 16)),
        example(DatasetDescriptor::new(10_000, 10_000).unwrap(), &svm, &e, part(16, 16)),
        example(DatasetDescriptor::new(500_000, 1000).unwrap(), &algo("kmeans"), &e, part(32, 4)),
    ];
    let model = fit_chained(&fixture, LearnerParams::default(), 2).unwrap();
    let rec = recommend(&model, &query, &svm, &e);
    let elapsed = start.elapsed();
    let pass = rec.partitioning == part(4, 16)
        && rec.block == BlockSize { block_rows: 12_800, block_cols: 16 }
        && elapsed < WORKED_EXAMPLE_BUDGET;
    report(1, "worked example block size", pass, format!("{} -> {:?} in {elapsed:?}", rec.partitioning, rec.block));
    assert!(pass);
}

#[test]
fn criterion_02_mean_over_pairs() {
    let start = Instant::now();
    let pairs: [(f64, f64); 3] = [(270.0, 484.0), (1123.0, 1096.0), (1770.0, 1825.0)];
    let comparisons: Vec<_> =
        pairs.iter().map(|&(t_star, other)| compare(t_star, &[(part(1, 1), Time::Finite(other))]).unwrap()).collect();
    let s = summarize(&comparisons).unwrap();
    let elapsed = start.elapsed();
    let reduction_pct = s.mean_reduction_vs_best * 100.0;
    let pass = (s.mean_ratio_vs_best - MEAN_RATIO_TARGET).abs() <= MEAN_RATIO_TOL
        && (reduction_pct - MEAN_REDUCTION_TARGET_PCT).abs() <= MEAN_REDUCTION_TOL_PP
        && elapsed < TABLE_BUDGET;
    report(
        2,
        "mean ratio and reduction over three pairs",
        pass,
        format!("ratio {:.5}, reduction {:.4}%", s.mean_ratio_vs_best, reduction_pct),
    );
    assert!(pass);
}

#[test]
fn criterion_03_grid_cardinality() {
    let k64 = grid_shape(64, 2).unwrap();
    let k256 = grid_shape(256, 2).unwrap();
    let d = DatasetDescriptor::new(1 << 20, 1 << 12).unwrap();
    let e = EnvironmentDescriptor::new(4, 16, 256_000_000_000).unwrap();
    let calls = std::sync::atomic::AtomicUsize::new(0);
    let exec = |d: &DatasetDescriptor, a: &AlgorithmDescriptor, e: &EnvironmentDescriptor, p: Partitioning| {
        calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        PresetExecutor { noise_rel: 0.0, seed: 0 }.execute(d, a, e, p)
    };
    let out = run_grid_search(&d, &algo("kmeans"), &e, &exec, SearchOptions::default(), None, |_| {}).unwrap();
    let evaluated = out.grid.cells.iter().filter(|c| c.time().is_some()).count();
    let calls = calls.load(std::sync::atomic::Ordering::SeqCst);
    let pass = k64.k == 6 && k64.exact && evaluated == 36 && calls == 36 && k256.k == 8;
    report(
        3,
        "grid cardinality",
        pass,
        format!("k(64)={}, cells={evaluated}, calls={calls}, k(256)={}", k64.k, k256.k),
    );
    assert!(pass);
}

#[test]
fn criterion_04_metric_identity() {
    let config = Config { cases: IDENTITY_CASES, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let result = runner.run(&(1e-6f64..1e6, 1e-6f64..1e6), |(x, y)| {
        let r = makespan_ratio(x, y).unwrap();
        let red = makespan_reduction(x, y).unwrap();
        let expected = 1.0 - 1.0 / r;
        // Absolute below magnitude 1, relative above it.
        prop_assert!((red - expected).abs() <= IDENTITY_TOL * expected.abs().max(1.0), "x={x} y={y}");
        Ok(())
    });
    let pass = result.is_ok();
    report(
        4,
        "reduction = 1 - 1/ratio",
        pass,
        format!("{IDENTITY_CASES} cases, tol {IDENTITY_TOL:e} x max(1, |1 - 1/r|): {result:?}"),
    );
    assert!(pass);
}

/// Independent evaluation of the cost model and the documented tie-break
/// (time, then fewer blocks, then smaller p_r, then smaller p_c).
fn brute_force_best(
    params: &CostModelParams,
    d: &DatasetDescriptor,
    e: &EnvironmentDescriptor,
    step: u64,
    k: u32,
) -> Option<(Partitioning, f64)> {
    let per_core = e.ram_per_node_bytes() / e.cores_per_node();
    let mut best: Option<(f64, u64, u64, u64)> = None;
    for i in 1..=k {
        for j in 1..=k {
            let p_r = step.pow(i).min(d.rows());
            let p_c = step.pow(j).min(d.cols());
            let br = d.rows().div_ceil(p_r);
            let bc = d.cols().div_ceil(p_c);
            if br * bc * 8 > per_core {
                continue;
            }
            let blocks = p_r * p_c;
            let waves = blocks.div_ceil(e.total_cores());
            let t = params.t0 + waves as f64 * params.gamma * br as f64 * bc as f64 + params.delta * blocks as f64;
            let cand = (t, blocks, p_r, p_c);
            let better = match best {
                None => true,
                Some(b) => cand.partial_cmp(&b) == Some(std::cmp::Ordering::Less),
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.map(|(t, _, p_r, p_c)| (part(p_r, p_c), t))
}

#[test]
fn criterion_05_gridsearch_argmin_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut agree, mut searched, mut all_failed) = (0, 0, 0);
    while searched < ORACLE_SEARCHES {
        let params = CostModelParams::new(
            rng.random_range(0.0..5.0),
            10f64.powf(rng.random_range(-10.0..-6.0)),
            10f64.powf(rng.random_range(-3.0..0.0)),
            0.0,
            rng.random(),
        )
        .unwrap();
        let d = DatasetDescriptor::new(rng.random_range(2..2_000_000), rng.random_range(2..50_000)).unwrap();
        let cores_per_node = 1u64 << rng.random_range(0..6);
        let e = EnvironmentDescriptor::new(rng.random_range(1..9), cores_per_node, 1u64 << rng.random_range(30..40))
            .unwrap();
        let step = rng.random_range(2..5);
        let Ok(shape) = grid_shape(e.total_cores(), step) else { continue };
        if d.rows() < step || d.cols() < step {
            continue;
        }
        let exec = |d: &DatasetDescriptor, _: &AlgorithmDescriptor, e: &EnvironmentDescriptor, p: Partitioning| {
            Ok(simulate_execution(&params, d, e, p))
        };
        let options = SearchOptions { step, ..SearchOptions::default() };
        let found = run_grid_search(&d, &algo("kmeans"), &e, &exec, options, None, |_| {})
            .ok()
            .map(|o| (o.example.best, o.example.best_time));
        let expected = brute_force_best(&params, &d, &e, step, shape.k);
        if found.is_none() && expected.is_none() {
            all_failed += 1;
            continue;
        }
        searched += 1;
        if found == expected {
            agree += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = agree == ORACLE_SEARCHES && elapsed < ORACLE_BUDGET;
    report(
        5,
        "grid search argmin vs brute force",
        pass,
        format!("{agree}/{ORACLE_SEARCHES} agree, {all_failed} all-failed grids skipped, {elapsed:?}"),
    );
    assert!(pass);
}

struct Case {
    d: DatasetDescriptor,
    a: AlgorithmDescriptor,
    e: EnvironmentDescriptor,
    grid: SearchGrid,
    example: TrainingExample,
}

struct Pipeline {
    train: Vec<Case>,
    held_out: Vec<Case>,
    model: ChainedModel,
    elapsed: Duration,
}

const PIPELINE_ALGOS: [&str; 5] = ["kmeans", "gmm", "pca", "random_forest", "svm"];

fn random_configuration(rng: &mut ChaCha8Rng) -> (DatasetDescriptor, AlgorithmDescriptor, EnvironmentDescriptor) {
    let rows = 10f64.powf(rng.random_range(3.0..7.0)).round() as u64;
    let cols = 10f64.powf(rng.random_range(1.0..5.0)).round() as u64;
    let a = algo(PIPELINE_ALGOS[rng.random_range(0..PIPELINE_ALGOS.len())]);
    let nodes = 1u64 << rng.random_range(0..4);
    let cores_per_node = 1u64 << rng.random_range(2..6);
    let ram = (16u64 << rng.random_range(0..4)) * 1_000_000_000;
    (DatasetDescriptor::new(rows, cols).unwrap(), a, EnvironmentDescriptor::new(nodes, cores_per_node, ram).unwrap())
}

fn pipeline() -> &'static Pipeline {
    static PIPELINE: OnceLock<Pipeline> = OnceLock::new();
    PIPELINE.get_or_init(|| {
        let start = Instant::now();
        let exec = PresetExecutor { noise_rel: 0.0, seed: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut seen = BTreeSet::new();
        let mut cases = Vec::new();
        while cases.len() < PIPELINE_TRAIN + PIPELINE_HELD_OUT {
            let (d, a, e) = random_configuration(&mut rng);
            if !seen.insert(ConfigurationKey::new(&d, &a, &e)) {
                continue;
            }
            let options = SearchOptions { parallelism: 4, ..SearchOptions::default() };
            let Ok(out) = run_grid_search(&d, &a, &e, &exec, options, None, |_| {}) else { continue };
            cases.push(Case { d, a, e, grid: out.grid, example: out.example });
        }
        let held_out = cases.split_off(PIPELINE_TRAIN);
        let examples: Vec<TrainingExample> = cases.iter().map(|c| c.example.clone()).collect();
        let model = fit_chained(&examples, LearnerParams::default(), 2).unwrap();
        Pipeline { train: cases, held_out, model, elapsed: start.elapsed() }
    })
}

#[test]
fn criterion_06_end_to_end_pipeline() {
    let p = pipeline();
    let start = Instant::now();
    let exec = PresetExecutor { noise_rel: 0.0, seed: 0 };
    let train_keys: BTreeSet<_> = p.train.iter().map(|c| c.example.key.clone()).collect();
    let unseen = p.held_out.iter().all(|c| !train_keys.contains(&c.example.key));
    let (mut within, mut ratios) = (0usize, Vec::new());
    for c in &p.held_out {
        let rec = recommend(&p.model, &c.d, &c.a, &c.e);
        let sweep: Vec<_> = c.grid.trials().collect();
        match simulate_execution(&exec.params_for(&c.a), &c.d, &c.e, rec.partitioning) {
            Time::Finite(t) => {
                if t <= PIPELINE_WITHIN_FACTOR * c.example.best_time {
                    within += 1;
                }
                ratios.push(compare(t, &sweep).unwrap().ratio_vs_worst);
            }
            // A failed recommendation counts as a miss and contributes no speedup.
            Time::Failed => ratios.push(0.0),
        }
    }
    let share = within as f64 / p.held_out.len() as f64;
    let mean_vs_worst = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let elapsed = p.elapsed + start.elapsed();
    let pass = p.train.len() >= PIPELINE_TRAIN
        && p.held_out.len() == PIPELINE_HELD_OUT
        && unseen
        && share >= PIPELINE_WITHIN_SHARE
        && mean_vs_worst > PIPELINE_MIN_RATIO_VS_WORST
        && elapsed < PIPELINE_BUDGET;
    report(
        6,
        "synthetic end-to-end pipeline",
        pass,
        format!(
            "{} train, {} held out, within {PIPELINE_WITHIN_FACTOR}x of best {within}/{} ({:.0}%), mean ratio vs worst {mean_vs_worst:.2}, {elapsed:?}",
            p.train.len(),
            p.held_out.len(),
            p.held_out.len(),
            share * 100.0
        ),
    );
    assert!(pass);
}

fn chain_ok(m: &ChainedModel) -> bool {
    m.tree_c().input_arity() == m.tree_r().input_arity() + 1 && m.tree_r().input_arity() == m.schema().arity()
}

#[test]
fn criterion_07_chaining_structure() {
    let mut models = vec![pipeline().model.clone(), reference_model()];
    let restored: Vec<ChainedModel> = models.iter().map(|m| deserialize_model(&serialize_model(m)).unwrap()).collect();
    models.extend(restored);
    let ok = models.iter().filter(|m| chain_ok(m)).count();
    let pass = ok == models.len();
    report(7, "chained arity", pass, format!("{ok}/{} models incl. round trips", models.len()));
    assert!(pass);
}

fn synthetic_log(path: &std::path::Path, seed: u64) {
    let exec = PresetExecutor { noise_rel: 0.05, seed };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for _ in 0..40 {
        let (d, a, e) = random_configuration(&mut rng);
        for i in 1..=4 {
            for j in 1..=4 {
                let p = blockwise_core::clamp_partitioning(&d, part(1 << i, 1 << j));
                let time = exec.execute(&d, &a, &e, p).unwrap();
                let r = ExecutionRecord {
                    dataset: d,
                    algorithm: a.clone(),
                    environment: e,
                    partitioning: p,
                    time,
                    extras: vec![],
                };
                text.push_str(&serialize_record(&r));
                text.push('\n');
            }
        }
    }
    std::fs::write(path, text).unwrap();
}

fn extract_and_train(log: &std::path::Path) -> (String, Vec<u8>) {
    let ingested = ingest::<f64>(log, ParseMode::Strict).unwrap();
    let extraction = extract_training_set(&ingested.records);
    let model = fit_chained(&extraction.examples, LearnerParams::default(), 2).unwrap();
    (write_training_set(&extraction.examples), serialize_model(&model))
}

#[test]
fn criterion_08_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.log"), dir.path().join("b.log"));
    synthetic_log(&a, 8);
    synthetic_log(&b, 8);
    let logs_equal = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();
    let (set_a, model_a) = extract_and_train(&a);
    let (set_b, model_b) = extract_and_train(&b);
    let pass = logs_equal && set_a == set_b && model_a == model_b && !model_a.is_empty();
    report(
        8,
        "byte-identical extract and train",
        pass,
        format!("model {} bytes, equal={}", model_a.len(), model_a == model_b),
    );
    assert!(pass);
}

fn reference_runs() -> Vec<TrainingExample> {
    let e = EnvironmentDescriptor::new(4, 16, 256_000_000_000).unwrap();
    let row = |name: &str, rows, cols, size, best| TrainingExample {
        key: ConfigurationKey::new(&DatasetDescriptor::with_details(rows, cols, size, None).unwrap(), &algo(name), &e),
        best,
        best_time: 1.0,
    };
    vec![
        row("kmeans", 500_000, 1000, 2_390_000_000, part(32, 4)),
        row("random_forest", 1000, 500_000, 2_920_000_000, part(32, 8)),
        row("svm", 10_000, 10_000, 1_100_000_000, part(16, 16)),
    ]
}

fn reference_model() -> ChainedModel {
    let params = LearnerParams { tree: TreeParams::unlimited(), ..LearnerParams::default() };
    fit_chained(&reference_runs(), params, 2).unwrap()
}

#[test]
fn criterion_09_memorization() {
    let model = reference_model();
    let rows = reference_runs();
    let hits = rows.iter().filter(|ex| model.predict(&ex.key) == ex.best).count();
    let pass = hits == rows.len();
    report(9, "training rows reproduced", pass, format!("{hits}/{}", rows.len()));
    assert!(pass);
}

#[test]
fn criterion_10_advisor_latency() {
    let p = pipeline();
    let mut durations = Vec::with_capacity(LATENCY_CALLS);
    for i in 0..LATENCY_CALLS {
        let c = &p.held_out[i % p.held_out.len()];
        let start = Instant::now();
        let rec = recommend(&p.model, &c.d, &c.a, &c.e);
        durations.push(start.elapsed());
        std::hint::black_box(rec);
    }
    durations.sort();
    let median = durations[durations.len() / 2];
    let pass = median < LATENCY_MEDIAN_LIMIT;
    report(10, "recommend latency", pass, format!("median {median:?} over {LATENCY_CALLS} calls"));
    assert!(pass);
}
