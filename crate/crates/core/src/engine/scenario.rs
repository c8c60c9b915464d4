// SPDX-License-Identifier: Apache-2.0

//! Hand-authored single episodes: an explicit target, optional pose overrides and a light script.

use serde::{Deserialize, Serialize};

use crate::scene::{EyeScene, SceneError, TargetSpec};

use super::config::{LightSetup, NeedleSetup, SimConfig};
use super::episode::{run_episode_with_script, EpisodeRecord, ScriptEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub target: TargetSpec,
    /// Replaces the configured needle pose.
    #[serde(default)]
    pub needle: Option<NeedleSetup>,
    /// Replaces the configured light pose.
    #[serde(default)]
    pub light: Option<LightSetup>,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    /// The configuration with this scenario's pose overrides applied.
    pub fn config(&self, base: &SimConfig) -> SimConfig {
        let mut cfg = base.clone();
        if let Some(n) = self.needle {
            cfg.needle = n;
        }
        if let Some(l) = self.light {
            cfg.light = l;
        }
        cfg
    }

    pub fn scene(&self, base: &SimConfig) -> Result<EyeScene, SceneError> {
        let scene = self.config(base).scene(self.target, self.seed);
        scene.validate()?;
        Ok(scene)
    }

    pub fn run(&self, base: &SimConfig) -> Result<EpisodeRecord, SceneError> {
        let scene = self.scene(base)?;
        Ok(run_episode_with_script(&scene, &self.config(base), &self.script))
    }

    /// The same scenario with its light script removed.
    pub fn unscripted(&self) -> Self {
        Self { script: Vec::new(), ..self.clone() }
    }
}
