use std::fmt::Write as _;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use blockwise_core::domain::Time;
use blockwise_core::extraction::{extract_training_set, read_training_set, write_training_set};
use blockwise_core::gridsearch::{
    complete_grid, exhaustive_report, grid_shape, read_grid, run_grid_search, write_grid,
};
use blockwise_core::learner::{deserialize_model, fit_chained, serialize_model};
use blockwise_core::log_ingest::{ingest, serialize_record};
use blockwise_core::metrics::{compare, export_heatmap, median};
use blockwise_core::num::format_significant;
use blockwise_core::simulator::{derive_seed, simulate_execution};
use blockwise_core::{
    recommend, AlgorithmDescriptor, ChainedModel, CommandExecutor, DatasetDescriptor, EnvironmentDescriptor, Executor,
    ExecutorError, GridError, LearnerParams, Mode, ParseMode, Partitioning, SearchGrid, SearchOptions, TaskKind,
    TrainingExample,
};
use clap::ArgMatches;
use log::{info, warn};

use crate::config::{Config, SimulatorConfig};
use crate::output::{write_atomic, CliError};
use crate::{
    pick, Command, ConfigurationArgs, EvalArgs, ExecutorArgs, ExtractArgs, GridSearchArgs, IngestArgs, ParseModeArgs,
    PredictArgs, SimulateArgs, TrainArgs,
};

pub fn dispatch(command: &Command, m: &ArgMatches, config: &Config, seed: u64) -> Result<(), CliError> {
    match command {
        Command::Ingest(args) => cmd_ingest(args, m, config),
        Command::Extract(args) => cmd_extract(args, m, config),
        Command::Gridsearch(args) => cmd_gridsearch(args, m, config, seed),
        Command::Train(args) => cmd_train(args, m, config),
        Command::Predict(args) => cmd_predict(args, m, config),
        Command::Eval(args) => cmd_eval(args, m, config, seed),
        Command::Simulate(args) => cmd_simulate(args, m, config, seed),
    }
}

/// Simulator using the built-in presets with any per-algorithm overrides
/// from the config file.
struct ConfiguredSimulator {
    sim: SimulatorConfig,
    seed: u64,
}

impl Executor<f64> for ConfiguredSimulator {
    fn execute(
        &self,
        d: &DatasetDescriptor,
        a: &AlgorithmDescriptor,
        e: &EnvironmentDescriptor,
        part: Partitioning,
    ) -> Result<Time<f64>, ExecutorError> {
        Ok(simulate_execution(&self.sim.params_for(a.name(), self.seed), d, e, part))
    }
}

fn simulator(config: &Config, seed: u64) -> ConfiguredSimulator {
    ConfiguredSimulator { sim: config.simulator.clone(), seed: derive_seed(seed, "simulator") }
}

fn executor(args: &ExecutorArgs, config: &Config, seed: u64) -> Box<dyn Executor<f64>> {
    match args.executor_cmd.as_ref().or(config.gridsearch.command.as_ref()) {
        Some(cmd) => {
            info!("running trials with: {cmd}");
            Box::new(CommandExecutor::shell(cmd))
        }
        None => Box::new(simulator(config, seed)),
    }
}

fn parse_mode(args: &ParseModeArgs, config: &Config) -> ParseMode {
    let strict = if args.strict {
        true
    } else if args.lenient {
        false
    } else {
        config.strict
    };
    if strict {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    }
}

fn descriptors(
    c: &ConfigurationArgs,
) -> Result<(DatasetDescriptor, AlgorithmDescriptor, EnvironmentDescriptor), CliError> {
    let usage = |e: blockwise_core::DomainError| CliError::Usage(e.to_string());
    let task: TaskKind = c.task.parse().map_err(usage)?;
    let mode: Mode = c.mode.parse().map_err(usage)?;
    let d = DatasetDescriptor::with_details(c.rows, c.cols, c.size_bytes, c.elem_bytes).map_err(usage)?;
    let a = AlgorithmDescriptor::new(&c.algo, task, mode).map_err(usage)?;
    let e = EnvironmentDescriptor::new(c.nodes, c.cores, c.ram).map_err(usage)?;
    Ok((d, a, e))
}

fn grid_error(e: GridError) -> CliError {
    match e {
        GridError::InvalidStep(_) | GridError::CoresBelowStep { .. } | GridError::DatasetTooSmall { .. } => {
            CliError::Usage(e.to_string())
        }
        GridError::Executor(_) | GridError::AllCellsFailed => CliError::Executor(e.to_string()),
        GridError::Incomplete | GridError::Mismatch(_) | GridError::Format { .. } => CliError::Input(e.to_string()),
    }
}

fn read_examples(path: &Path) -> Result<Vec<TrainingExample>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Input(format!("cannot open training set {}: {e}", path.display())))?;
    read_training_set(BufReader::new(file)).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<ChainedModel, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Model(format!("cannot read model {}: {e}", path.display())))?;
    deserialize_model(&bytes).map_err(|e| CliError::Model(format!("{}: {e}", path.display())))
}

fn cmd_ingest(args: &IngestArgs, m: &ArgMatches, config: &Config) -> Result<(), CliError> {
    let log = pick(m, "log", args.log.clone(), config.paths.log.clone());
    let ingested = ingest::<f64>(&log, parse_mode(&args.parse, config))
        .map_err(|e| CliError::Input(format!("{}: {e}", log.display())))?;
    for (line, msg) in &ingested.diagnostics {
        warn!("{}:{line}: skipped: {msg}", log.display());
    }
    if let Some(out) = &args.output {
        let mut text = String::new();
        for r in &ingested.records {
            text.push_str(&serialize_record(r));
            text.push('\n');
        }
        write_atomic(out, text.as_bytes())?;
    }
    println!("records={} skipped={}", ingested.records.len(), ingested.skipped);
    Ok(())
}

fn cmd_extract(args: &ExtractArgs, m: &ArgMatches, config: &Config) -> Result<(), CliError> {
    let log = pick(m, "log", args.log.clone(), config.paths.log.clone());
    let out = pick(m, "output", args.output.clone(), config.paths.training_set.clone());
    let ingested = ingest::<f64>(&log, parse_mode(&args.parse, config))
        .map_err(|e| CliError::Input(format!("{}: {e}", log.display())))?;
    for (line, msg) in &ingested.diagnostics {
        warn!("{}:{line}: skipped: {msg}", log.display());
    }
    let extraction = extract_training_set(&ingested.records);
    if extraction.examples.is_empty() {
        warn!("no training examples extracted from {}", log.display());
    }
    if extraction.dropped_groups > 0 {
        warn!("{} configurations had only failed runs and were dropped", extraction.dropped_groups);
    }
    write_atomic(&out, write_training_set(&extraction.examples).as_bytes())?;
    println!("examples={} dropped_groups={}", extraction.examples.len(), extraction.dropped_groups);
    Ok(())
}

fn default_grid_path(dir: &Path, d: &DatasetDescriptor, a: &AlgorithmDescriptor, e: &EnvironmentDescriptor) -> PathBuf {
    dir.join(format!(
        "{}-{}-{}-{}x{}-{}-{}x{}-{}.grid",
        a.name(),
        a.task_kind(),
        a.mode(),
        d.rows(),
        d.cols(),
        d.size_bytes(),
        e.nodes(),
        e.cores_per_node(),
        e.ram_per_node_bytes()
    ))
}

fn cmd_gridsearch(args: &GridSearchArgs, m: &ArgMatches, config: &Config, seed: u64) -> Result<(), CliError> {
    let (d, a, e) = descriptors(&args.configuration)?;
    let options = SearchOptions {
        step: pick(m, "step", args.step, config.gridsearch.step),
        parallelism: pick(m, "parallelism", args.executor.parallelism, config.gridsearch.parallelism),
        include_identity: args.include_identity || config.gridsearch.include_identity,
    };
    let grids_dir = pick(m, "grids_dir", args.grids_dir.clone(), config.paths.grids_dir.clone());
    let grid_path = args.grid.clone().unwrap_or_else(|| default_grid_path(&grids_dir, &d, &a, &e));
    let training_set = pick(m, "training_set", args.training_set.clone(), config.paths.training_set.clone());

    let resume = if grid_path.exists() {
        let text = std::fs::read_to_string(&grid_path)
            .map_err(|err| CliError::Input(format!("cannot read {}: {err}", grid_path.display())))?;
        let grid: SearchGrid = read_grid(&text).map_err(grid_error)?;
        info!("resuming {} ({} cells pending)", grid_path.display(), grid.pending());
        Some(grid)
    } else {
        None
    };

    let exec = executor(&args.executor, config, seed);
    let mut checkpoint_error = None;
    let outcome = run_grid_search(&d, &a, &e, exec.as_ref(), options, resume, |g| {
        if checkpoint_error.is_none() {
            checkpoint_error = write_atomic(&grid_path, write_grid(g).as_bytes()).err();
        }
    });
    if let Some(err) = checkpoint_error {
        return Err(err);
    }
    let outcome = outcome.map_err(grid_error)?;
    write_atomic(&grid_path, write_grid(&outcome.grid).as_bytes())?;

    let mut examples = if training_set.exists() { read_examples(&training_set)? } else { Vec::new() };
    examples.retain(|ex| ex.key != outcome.example.key);
    examples.push(outcome.example.clone());
    examples.sort_by(|x, y| x.key.cmp(&y.key));
    write_atomic(&training_set, write_training_set(&examples).as_bytes())?;

    if args.report {
        for (p, t) in exhaustive_report(&outcome.grid) {
            println!("{}\t{}\t{}", p.p_r(), p.p_c(), format_significant(t, 6));
        }
    }
    println!(
        "best p_r={} p_c={} time={} grid={}x{} calls={} grid_file={}",
        outcome.example.best.p_r(),
        outcome.example.best.p_c(),
        format_significant(outcome.example.best_time, 6),
        outcome.shape.k,
        outcome.shape.k,
        outcome.invocations,
        grid_path.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs, m: &ArgMatches, config: &Config) -> Result<(), CliError> {
    let training_set = pick(m, "training_set", args.training_set.clone(), config.paths.training_set.clone());
    let model_path = pick(m, "model", args.model.clone(), config.paths.model.clone());
    let mut learner = config.learner.clone();
    learner.max_depth = pick(m, "max_depth", args.max_depth, learner.max_depth);
    learner.min_samples_leaf = pick(m, "min_samples_leaf", args.min_samples_leaf, learner.min_samples_leaf);
    learner.max_partitions_factor =
        pick(m, "max_partitions_factor", args.max_partitions_factor, learner.max_partitions_factor);
    if learner.min_samples_leaf == 0 {
        return Err(CliError::Usage("--min-samples-leaf must be at least 1".into()));
    }
    let step = pick(m, "step", args.step, config.gridsearch.step);
    let params: LearnerParams = learner.params();

    let examples = read_examples(&training_set)?;
    let model = fit_chained(&examples, params, step)
        .map_err(|e| CliError::Input(format!("{}: {e}", training_set.display())))?;
    write_atomic(&model_path, &serialize_model(&model))?;
    println!(
        "examples={} depth_r={} depth_c={} nodes={} model={}",
        examples.len(),
        model.tree_r().depth(),
        model.tree_c().depth(),
        model.node_count(),
        model_path.display()
    );
    Ok(())
}

fn cmd_predict(args: &PredictArgs, m: &ArgMatches, config: &Config) -> Result<(), CliError> {
    let (d, a, e) = descriptors(&args.configuration)?;
    let model = load_model(&pick(m, "model", args.model.clone(), config.paths.model.clone()))?;
    let rec = recommend(&model, &d, &a, &e);
    if !args.machine {
        println!("{rec}");
    }
    println!("{}", rec.machine_line());
    Ok(())
}

fn cmd_eval(args: &EvalArgs, m: &ArgMatches, config: &Config, seed: u64) -> Result<(), CliError> {
    let (d, a, e) = descriptors(&args.configuration)?;
    let model = load_model(&pick(m, "model", args.model.clone(), config.paths.model.clone()))?;
    let heatmap_path = pick(m, "heatmap", args.heatmap.clone(), config.paths.heatmap.clone());
    if args.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let exec = executor(&args.executor, config, seed);

    let grid: SearchGrid = match &args.grid {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|err| CliError::Input(format!("cannot read {}: {err}", path.display())))?;
            let grid = read_grid(&text).map_err(grid_error)?;
            if !grid.is_complete() {
                return Err(CliError::Input(format!(
                    "{} has pending cells; finish it with gridsearch",
                    path.display()
                )));
            }
            grid
        }
        None => {
            let step = pick(m, "step", args.step, config.gridsearch.step);
            let shape = grid_shape(e.total_cores(), step).map_err(grid_error)?;
            let mut grid = SearchGrid::new(&d, step, shape.k, config.gridsearch.include_identity);
            let parallelism = pick(m, "parallelism", args.executor.parallelism, config.gridsearch.parallelism);
            complete_grid(&mut grid, &d, &a, &e, exec.as_ref(), parallelism, |_| {}).map_err(grid_error)?;
            grid
        }
    };
    let (best, _) = grid.best().map_err(grid_error)?;
    let rec = recommend(&model, &d, &a, &e);

    // Reuse the sweep's measurement when there is exactly one run to take.
    let cached = grid.trials().find(|(p, _)| *p == rec.partitioning).map(|(_, t)| t);
    let t_star = match cached {
        Some(t) if args.repeats == 1 => t,
        _ => {
            let mut times = Vec::with_capacity(args.repeats);
            for _ in 0..args.repeats {
                match exec.execute(&d, &a, &e, rec.partitioning).map_err(|e| CliError::Executor(e.to_string()))? {
                    Time::Finite(t) => times.push(t),
                    Time::Failed => {}
                }
            }
            median(&times).map(Time::Finite).unwrap_or(Time::Failed)
        }
    };

    write_atomic(&heatmap_path, export_heatmap(&grid, rec.partitioning, best).as_bytes())?;
    let sweep: Vec<_> = grid.trials().collect();
    let mut out = format!("recommended {} t*={}\n", rec.partitioning, t_star);
    match t_star {
        Time::Finite(t) => {
            let c = compare(t, &sweep).map_err(|e| CliError::Executor(e.to_string()))?;
            for (name, other, ratio, reduction) in [
                ("best", c.best_other, c.ratio_vs_best, c.reduction_vs_best),
                ("average", c.avg_other, c.ratio_vs_avg, c.reduction_vs_avg),
                ("worst", c.worst_other, c.ratio_vs_worst, c.reduction_vs_worst),
            ] {
                writeln!(
                    out,
                    "vs {name}: t={} ratio={} reduction={}%",
                    format_significant(other, 6),
                    format_significant(ratio, 4),
                    format_significant(reduction * 100.0, 4)
                )
                .expect("String write");
            }
        }
        Time::Failed => warn!("the recommended partitioning failed; no ratios reported"),
    }
    write!(out, "best {} heatmap={}", best, heatmap_path.display()).expect("String write");
    println!("{out}");
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, m: &ArgMatches, config: &Config, seed: u64) -> Result<(), CliError> {
    let (d, a, e) = descriptors(&args.configuration)?;
    let part = Partitioning::new(args.p_r, args.p_c).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut sim = simulator(config, seed);
    sim.sim.noise_rel = pick(m, "noise", args.noise, config.simulator.noise_rel);
    let params = sim.sim.params_for(a.name(), sim.seed);
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let clamped = blockwise_core::clamp_partitioning(&d, part);
    if clamped != part {
        warn!("partitioning {part} clamped to {clamped}");
    }
    let block = blockwise_core::block_size(&d, clamped).expect("clamped partitioning fits");
    let t = simulate_execution(&params, &d, &e, clamped);
    println!(
        "p_r={} p_c={} block_rows={} block_cols={} time={} t0={} gamma={} delta={} noise_rel={}",
        clamped.p_r(),
        clamped.p_c(),
        block.block_rows,
        block.block_cols,
        match t {
            Time::Finite(s) => format_significant(s, 6),
            Time::Failed => t.to_string(),
        },
        params.t0,
        params.gamma,
        params.delta,
        params.noise_rel
    );
    Ok(())
}
