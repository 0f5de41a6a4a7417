//! Parametric execution-cost model used to generate training data and to
//! validate recommendations without a cluster.
//!
//! A run with `B = p_r * p_c` blocks on `C` cores executes in `ceil(B / C)`
//! waves. Each wave costs as much as processing one block, and every block
//! adds a fixed scheduling overhead:
//!
//! ```text
//! t = t0 + ceil(B / C) * gamma * block_rows * block_cols + delta * B
//! ```
//!
//! A run fails when one block does not fit in the memory of a single core.
//! Too few blocks leave cores idle, too many drown in overhead, so time over
//! the partitioning grid is U-shaped. The constants are stand-ins with no
//! claim to match any particular runtime.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::domain::{
    block_fits_in_core_memory, BlockSize, DatasetDescriptor, EnvironmentDescriptor, Partitioning, Time,
};
use crate::num::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostModelError {
    #[error("cost model parameter {name} must be {requirement}")]
    InvalidParameter { name: &'static str, requirement: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModelParams<T> {
    /// Fixed startup cost, seconds.
    pub t0: T,
    /// Compute cost per element of a block, seconds.
    pub gamma: T,
    /// Overhead per block (task creation, scheduling, transfer), seconds.
    pub delta: T,
    /// Relative amplitude of multiplicative noise.
    pub noise_rel: T,
    pub seed: u64,
}

impl<T: Scalar> CostModelParams<T> {
    pub fn new(t0: T, gamma: T, delta: T, noise_rel: T, seed: u64) -> Result<Self, CostModelError> {
        let params = Self { t0, gamma, delta, noise_rel, seed };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), CostModelError> {
        let bad = |name, requirement| Err(CostModelError::InvalidParameter { name, requirement });
        if !(self.t0.is_finite() && self.t0 >= T::zero()) {
            return bad("t0", "finite and non-negative");
        }
        if !(self.gamma.is_finite() && self.gamma > T::zero()) {
            return bad("gamma", "finite and positive");
        }
        if !(self.delta.is_finite() && self.delta > T::zero()) {
            return bad("delta", "finite and positive");
        }
        if !(self.noise_rel.is_finite() && self.noise_rel >= T::zero() && self.noise_rel < T::one()) {
            return bad("noise_rel", "in [0, 1)");
        }
        Ok(())
    }

    /// Built-in parameters for a few common algorithms.
    ///
    /// Relative compute rates (per element, before the shared base rate):
    /// pca 0.5, kmeans 1, gmm 2, random_forest 4, svm 8. Per-block overhead
    /// is 0.05 s for all of them, except random_forest which schedules
    /// heavier tasks (0.1 s). Unknown names fall back to the kmeans row.
    /// These values are illustrative only.
    pub fn preset(algorithm: &str) -> Self {
        let base = 2e-9;
        let (rate, delta) = match algorithm {
            "pca" => (0.5, 0.05),
            "gmm" => (2.0, 0.05),
            "random_forest" | "rf" => (4.0, 0.1),
            "svm" => (8.0, 0.05),
            _ => (1.0, 0.05),
        };
        Self {
            t0: T::from_f64_lossy(1.0),
            gamma: T::from_f64_lossy(base * rate),
            delta: T::from_f64_lossy(delta),
            noise_rel: T::zero(),
            seed: 0,
        }
    }
}

/// Names covered by [`CostModelParams::preset`] with their own rates.
pub const PRESET_ALGORITHMS: [&str; 5] = ["kmeans", "random_forest", "svm", "gmm", "pca"];

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one well-mixed seed.
pub fn mix_seed(words: &[u64]) -> u64 {
    words.iter().fold(0x6A09_E667_F3BC_C909, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Derives a component seed from a top-level seed and a component label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut words = vec![seed];
    words.extend(label.bytes().map(u64::from));
    mix_seed(&words)
}

/// Simulated run time for `part`, which the caller has already clamped to `d`.
pub fn simulate_execution<T: Scalar>(
    params: &CostModelParams<T>,
    d: &DatasetDescriptor,
    e: &EnvironmentDescriptor,
    part: Partitioning,
) -> Time<T> {
    let block = BlockSize { block_rows: d.rows().div_ceil(part.p_r()), block_cols: d.cols().div_ceil(part.p_c()) };
    if !block_fits_in_core_memory(d, e, block) {
        return Time::Failed;
    }
    let blocks = part.total_blocks();
    let waves = blocks.div_ceil(e.total_cores());
    let mut t = params.t0
        + T::from_count(waves) * params.gamma * T::from_count(block.block_rows) * T::from_count(block.block_cols)
        + params.delta * T::from_count(blocks);
    if params.noise_rel > T::zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
            params.seed,
            d.rows(),
            d.cols(),
            d.size_bytes(),
            part.p_r(),
            part.p_c(),
        ]));
        let u: f64 = rng.random_range(-1.0..=1.0);
        t = t * (T::one() + T::from_f64_lossy(u) * params.noise_rel);
    }
    Time::Finite(t)
}
