// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benchmarks.

use shadownav_core::engine::make_scene;
use shadownav_core::{EyeScene, SimConfig};

pub const SEED: u64 = 42;

/// The default configuration and the scene of its first batch episode.
pub fn default_scene() -> (SimConfig, EyeScene) {
    let cfg = SimConfig::default();
    let scene = make_scene(&cfg, SEED, 0).expect("default sampler yields a target");
    (cfg, scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_scene_is_valid() {
        let (_, scene) = default_scene();
        scene.validate().unwrap();
    }
}
