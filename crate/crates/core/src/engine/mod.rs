// SPDX-License-Identifier: Apache-2.0

//! Episode orchestration: scene construction, target sampling, the control loop and statistics.

mod config;
mod episode;
mod sampler;
mod scenario;
mod stats;
mod trajectory;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{CalibrationSetup, EpisodeLimits, LightSetup, NeedleSetup, SimConfig};
pub use episode::{
    run_episode, run_episode_with_script, EpisodeRecord, LightScript, Outcome, ScriptEntry, StepAction, StepRecord,
    Trigger,
};
pub use sampler::{AxisDist, SamplingError, SpreadKind, TargetSampler, APPROACH_HEIGHT_MM};
pub use scenario::Scenario;
pub use stats::{aggregate, HistogramBin, KindStats, StatsError, SummaryStats, XY_BINS, XY_BIN_MM};
pub use trajectory::{trajectory_table, TrajectoryRow, TRAJECTORY_HEADER};

use crate::scene::{EyeScene, TargetSpec};

/// Seed for episode `index` of a batch started from `base`.
pub fn episode_seed(base: u64, index: u64) -> u64 {
    // SplitMix64 finaliser over the combined value.
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_target(cfg: &SimConfig, seed: u64) -> Result<TargetSpec, SamplingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cfg.sampler.sample(&cfg.eye, cfg.light_state().tip(), &mut rng)
}

/// Builds the scene for episode `index` of a batch.
pub fn make_scene(cfg: &SimConfig, base_seed: u64, index: u64) -> Result<EyeScene, SamplingError> {
    let seed = episode_seed(base_seed, index);
    Ok(cfg.scene(sample_target(cfg, seed)?, seed))
}

/// Runs episode `index` of a batch.
pub fn run_indexed(cfg: &SimConfig, base_seed: u64, index: u64) -> Result<EpisodeRecord, SamplingError> {
    let scene = make_scene(cfg, base_seed, index)?;
    let mut rec = run_episode(&scene, cfg);
    rec.episode = index;
    Ok(rec)
}

/// Runs `n` sampled episodes on the current rayon pool; records come back in index order.
pub fn run_batch(cfg: &SimConfig, base_seed: u64, n: u64) -> Result<Vec<EpisodeRecord>, SamplingError> {
    (0..n).into_par_iter().map(|i| run_indexed(cfg, base_seed, i)).collect()
}
