// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::controller::Thresholds;
use crate::features::ObserveOptions;
use crate::geometry::{EyeModel, Vec3};
use crate::kinematics::{LightProbeState, NeedleState, ProbeState, StepSizes};
use crate::scene::{EyeScene, TargetSpec};

use super::sampler::TargetSampler;

/// Initial needle pose. The default trocar sits low on the sclera so the shaft approaches at a shallow angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeedleSetup {
    pub trocar_azimuth_deg: f64,
    /// Trocar height on the sphere; `None` places it on the limbus circle.
    pub trocar_z_mm: Option<f64>,
    pub r_mm: f64,
    pub theta_h_deg: f64,
    pub theta_v_deg: f64,
}

impl Default for NeedleSetup {
    fn default() -> Self {
        Self { trocar_azimuth_deg: 90.0, trocar_z_mm: Some(2.5), r_mm: 8.0, theta_h_deg: -90.0, theta_v_deg: 55.0 }
    }
}

/// Static light pose: trocar on the sphere, shaft aimed at `aim`, tip `r_mm` inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LightSetup {
    pub trocar_azimuth_deg: f64,
    /// Trocar height on the sphere; `None` places it on the limbus circle.
    pub trocar_z_mm: Option<f64>,
    pub r_mm: f64,
    pub aim: Vec3,
}

impl Default for LightSetup {
    fn default() -> Self {
        Self { trocar_azimuth_deg: 125.0, trocar_z_mm: Some(7.9), r_mm: 2.46, aim: Vec3::new(-2.78, 3.97, -10.98) }
    }
}

/// Azimuthal wiggle used to estimate the trocar projection before navigation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSetup {
    /// H steps on each side of the start azimuth; lines are captured at -k, 0, +k.
    pub half_span_steps: u32,
}

impl Default for CalibrationSetup {
    fn default() -> Self {
        Self { half_span_steps: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeLimits {
    pub max_steps: u64,
    /// Steps without progress before an episode is declared stuck.
    pub stuck_window: u64,
    /// Minimum drop in (needle-target + shadow-target) pixel distance that counts as progress.
    pub stuck_min_improvement_px: f64,
    /// Times all step sizes are halved on a stall before the episode counts as stuck.
    pub refinements: u32,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self { max_steps: 20_000, stuck_window: 500, stuck_min_improvement_px: 0.5, refinements: 2 }
    }
}

/// Everything needed to build scenes and run episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub eye: EyeModel,
    pub needle: NeedleSetup,
    pub light: LightSetup,
    pub thresholds: Thresholds,
    pub steps: StepSizes,
    pub observe: ObserveOptions,
    pub calibration: CalibrationSetup,
    pub limits: EpisodeLimits,
    pub sampler: TargetSampler,
}

impl SimConfig {
    pub fn needle_state(&self) -> NeedleState {
        let n = &self.needle;
        ProbeState::new(
            self.eye.scleral_point(n.trocar_azimuth_deg, n.trocar_z_mm),
            n.r_mm,
            n.theta_h_deg,
            n.theta_v_deg,
        )
    }

    pub fn light_state(&self) -> LightProbeState {
        let l = &self.light;
        ProbeState::aimed(self.eye.scleral_point(l.trocar_azimuth_deg, l.trocar_z_mm), l.aim, l.r_mm)
    }

    pub fn scene(&self, target: TargetSpec, rng_seed: u64) -> EyeScene {
        EyeScene { eye: self.eye, needle: self.needle_state(), light: self.light_state(), target, rng_seed }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.eye.validate().map_err(|e| e.to_string())?;
        self.thresholds.validate().map_err(str::to_string)?;
        self.sampler.validate().map_err(str::to_string)?;
        if self.limits.max_steps < 1 {
            return Err("limits.max_steps must be at least 1".into());
        }
        if self.observe.line_samples < 2 {
            return Err("observe.line_samples must be at least 2".into());
        }
        if !(self.steps.delta_r_mm > 0.0 && self.steps.delta_v_deg > 0.0 && self.steps.delta_h_deg > 0.0) {
            return Err("step sizes must be positive".into());
        }
        Ok(())
    }
}
