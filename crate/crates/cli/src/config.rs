//! Pipeline configuration file (TOML). Every key is optional; unknown keys are
//! rejected so typos surface immediately.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use blockwise_core::gridsearch::DEFAULT_STEP;
use blockwise_core::learner::TreeParams;
use blockwise_core::{CostModelParams, LearnerParams};
use serde::Deserialize;

pub const DEFAULT_LOG: &str = "runs.log";
pub const DEFAULT_TRAINING_SET: &str = "training.tsv";
pub const DEFAULT_MODEL: &str = "model.blk";
pub const DEFAULT_GRIDS_DIR: &str = "grids";
pub const DEFAULT_HEATMAP: &str = "heatmap.tsv";
pub const DEFAULT_PARALLELISM: usize = 1;
/// 0 means unlimited depth.
pub const DEFAULT_MAX_DEPTH: usize = TreeParams::DEFAULT_MAX_DEPTH;
pub const DEFAULT_MIN_SAMPLES_LEAF: usize = 1;
pub const DEFAULT_MAX_PARTITIONS_FACTOR: u64 = LearnerParams::DEFAULT_MAX_PARTITIONS_FACTOR;
pub const DEFAULT_NOISE_REL: f64 = 0.0;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub strict: bool,
    pub paths: Paths,
    pub gridsearch: GridSearchConfig,
    pub learner: LearnerConfig,
    pub simulator: SimulatorConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub log: PathBuf,
    pub training_set: PathBuf,
    pub model: PathBuf,
    pub grids_dir: PathBuf,
    pub heatmap: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSearchConfig {
    pub step: u64,
    pub parallelism: usize,
    pub include_identity: bool,
    /// Shell command run once per trial instead of the simulator.
    pub command: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub max_partitions_factor: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub noise_rel: f64,
    /// Per-algorithm overrides of the built-in presets.
    pub algorithms: BTreeMap<String, CostOverride>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostOverride {
    pub t0: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            strict: false,
            paths: Paths::default(),
            gridsearch: GridSearchConfig::default(),
            learner: LearnerConfig::default(),
            simulator: SimulatorConfig::default(),
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            log: DEFAULT_LOG.into(),
            training_set: DEFAULT_TRAINING_SET.into(),
            model: DEFAULT_MODEL.into(),
            grids_dir: DEFAULT_GRIDS_DIR.into(),
            heatmap: DEFAULT_HEATMAP.into(),
        }
    }
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        Self { step: DEFAULT_STEP, parallelism: DEFAULT_PARALLELISM, include_identity: false, command: None }
    }
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
            min_samples_leaf: DEFAULT_MIN_SAMPLES_LEAF,
            max_partitions_factor: DEFAULT_MAX_PARTITIONS_FACTOR,
        }
    }
}

impl LearnerConfig {
    pub fn params(&self) -> LearnerParams {
        LearnerParams {
            tree: TreeParams {
                max_depth: (self.max_depth > 0).then_some(self.max_depth),
                min_samples_leaf: self.min_samples_leaf,
            },
            max_partitions_factor: self.max_partitions_factor,
        }
    }
}

impl SimulatorConfig {
    pub fn params_for(&self, algorithm: &str, seed: u64) -> CostModelParams {
        let preset = CostModelParams::preset(algorithm);
        let o = self.algorithms.get(algorithm).copied().unwrap_or_default();
        CostModelParams {
            t0: o.t0.unwrap_or(preset.t0),
            gamma: o.gamma.unwrap_or(preset.gamma),
            delta: o.delta.unwrap_or(preset.delta),
            noise_rel: self.noise_rel,
            seed,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, String> {
        let config: Config = toml::from_str(text).map_err(|e| e.message().to_string())?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.gridsearch.step < 2 {
            return Err(format!("gridsearch.step must be at least 2, got {}", self.gridsearch.step));
        }
        if self.gridsearch.parallelism == 0 {
            return Err("gridsearch.parallelism must be at least 1".into());
        }
        if self.learner.min_samples_leaf == 0 {
            return Err("learner.min_samples_leaf must be at least 1".into());
        }
        if self.learner.max_partitions_factor == 0 {
            return Err("learner.max_partitions_factor must be at least 1".into());
        }
        for name in self.simulator.algorithms.keys() {
            self.simulator.params_for(name, 0).validate().map_err(|e| format!("simulator.algorithms.{name}: {e}"))?;
        }
        CostModelParams { noise_rel: self.simulator.noise_rel, ..CostModelParams::preset("") }
            .validate()
            .map_err(|e| format!("simulator: {e}"))
    }
}
