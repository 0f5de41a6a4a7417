mod commands;
mod config;
mod output;

use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::*;
use crate::output::{parse_bytes, CliError};

/// Recommends block sizes for distributed array workloads from past runs.
#[derive(Debug, Parser)]
#[command(name = "blockwise", version)]
pub struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true, env = "BLOCKWISE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Top-level seed; component seeds are derived from it.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a run log and optionally write it back normalized.
    Ingest(IngestArgs),
    /// Reduce a run log to the best partitioning per configuration.
    Extract(ExtractArgs),
    /// Run (or resume) the exhaustive grid for one configuration.
    Gridsearch(GridSearchArgs),
    /// Fit the chained model from a training set.
    Train(TrainArgs),
    /// Recommend a partitioning and block size.
    Predict(PredictArgs),
    /// Compare the recommendation against a full sweep and write a heatmap.
    Eval(EvalArgs),
    /// Evaluate the cost model for one partitioning.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct ParseModeArgs {
    /// Abort on the first malformed line.
    #[arg(long, conflicts_with = "lenient")]
    pub strict: bool,
    /// Skip malformed lines with a warning [default].
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Run log to read.
    #[arg(long, default_value = DEFAULT_LOG)]
    pub log: PathBuf,
    /// Where to write the normalized log; nothing is written when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub parse: ParseModeArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Run log to read.
    #[arg(long, default_value = DEFAULT_LOG)]
    pub log: PathBuf,
    /// Training set to write.
    #[arg(long, default_value = DEFAULT_TRAINING_SET)]
    pub output: PathBuf,
    #[command(flatten)]
    pub parse: ParseModeArgs,
}

/// One ⟨dataset, algorithm, environment⟩ configuration.
#[derive(Debug, Args)]
pub struct ConfigurationArgs {
    #[arg(long)]
    pub rows: u64,
    #[arg(long)]
    pub cols: u64,
    /// Dataset footprint in bytes (suffixes K, M, G, Ki, Mi, Gi accepted).
    #[arg(long, default_value = "0", value_parser = parse_bytes)]
    pub size_bytes: u64,
    /// Bytes per element; when given with --size-bytes the two must agree.
    #[arg(long)]
    pub elem_bytes: Option<u32>,
    #[arg(long)]
    pub algo: String,
    /// classification, clustering, dim_reduction or other.
    #[arg(long, default_value = "other")]
    pub task: String,
    /// train or inference.
    #[arg(long, default_value = "train")]
    pub mode: String,
    #[arg(long)]
    pub nodes: u64,
    /// Cores per node.
    #[arg(long)]
    pub cores: u64,
    /// RAM per node in bytes (suffixes accepted).
    #[arg(long, value_parser = parse_bytes)]
    pub ram: u64,
}

#[derive(Debug, Args)]
pub struct ExecutorArgs {
    /// Shell command run per trial instead of the simulator; it reads
    /// BLOCKWISE_* variables and prints seconds.
    #[arg(long)]
    pub executor_cmd: Option<String>,
    /// Trials in flight at once.
    #[arg(long, default_value_t = DEFAULT_PARALLELISM)]
    pub parallelism: usize,
}

#[derive(Debug, Args)]
pub struct GridSearchArgs {
    #[command(flatten)]
    pub configuration: ConfigurationArgs,
    #[command(flatten)]
    pub executor: ExecutorArgs,
    /// Base of the partition ladder.
    #[arg(long, default_value_t = blockwise_core::gridsearch::DEFAULT_STEP)]
    pub step: u64,
    /// Also try the unpartitioned (1, 1) layout.
    #[arg(long)]
    pub include_identity: bool,
    /// Grid file to create or resume [default: derived name under the grids directory].
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Directory for grid files.
    #[arg(long, default_value = DEFAULT_GRIDS_DIR)]
    pub grids_dir: PathBuf,
    /// Training set the best cell is merged into.
    #[arg(long, default_value = DEFAULT_TRAINING_SET)]
    pub training_set: PathBuf,
    /// Print every finished cell, fastest first.
    #[arg(long)]
    pub report: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training set to read.
    #[arg(long, default_value = DEFAULT_TRAINING_SET)]
    pub training_set: PathBuf,
    /// Model file to write.
    #[arg(long, default_value = DEFAULT_MODEL)]
    pub model: PathBuf,
    /// Maximum tree depth; 0 means unlimited.
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    pub max_depth: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_SAMPLES_LEAF)]
    pub min_samples_leaf: usize,
    /// Labels above this multiple of the largest core count are rejected.
    #[arg(long, default_value_t = DEFAULT_MAX_PARTITIONS_FACTOR)]
    pub max_partitions_factor: u64,
    /// Grid step the training labels came from (recorded in the model).
    #[arg(long, default_value_t = blockwise_core::gridsearch::DEFAULT_STEP)]
    pub step: u64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub configuration: ConfigurationArgs,
    /// Model file to read.
    #[arg(long, default_value = DEFAULT_MODEL)]
    pub model: PathBuf,
    /// Print only the machine-readable line.
    #[arg(long)]
    pub machine: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub configuration: ConfigurationArgs,
    #[command(flatten)]
    pub executor: ExecutorArgs,
    /// Model file to read.
    #[arg(long, default_value = DEFAULT_MODEL)]
    pub model: PathBuf,
    /// Completed grid to compare against; a fresh sweep is run when absent.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Base of the partition ladder for a fresh sweep.
    #[arg(long, default_value_t = blockwise_core::gridsearch::DEFAULT_STEP)]
    pub step: u64,
    /// Heatmap table to write.
    #[arg(long, default_value = DEFAULT_HEATMAP)]
    pub heatmap: PathBuf,
    /// Runs of the recommended partitioning; the median time is used.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub configuration: ConfigurationArgs,
    #[arg(long)]
    pub p_r: u64,
    #[arg(long)]
    pub p_c: u64,
    /// Relative noise amplitude in [0, 1).
    #[arg(long, default_value_t = DEFAULT_NOISE_REL)]
    pub noise: f64,
}

/// True when the user typed the flag (or set its environment variable).
pub fn explicit(m: &ArgMatches, id: &str) -> bool {
    matches!(m.value_source(id), Some(ValueSource::CommandLine | ValueSource::EnvVariable))
}

/// Flag if given, otherwise the config value (which already holds the default).
pub fn pick<T>(m: &ArgMatches, id: &str, flag: T, from_config: T) -> T {
    if explicit(m, id) {
        flag
    } else {
        from_config
    }
}

fn run() -> Result<(), CliError> {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            // Help and version go to stdout and are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;

    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).format_target(false).init();

    let config = match &cli.config {
        Some(path) => Config::load(path).map_err(CliError::Usage)?,
        None => Config::default(),
    };
    let seed = pick(&matches, "seed", cli.seed, config.seed);
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    commands::dispatch(&cli.command, sub, &config, seed)
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
