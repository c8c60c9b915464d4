// SPDX-License-Identifier: Apache-2.0

//! Ground-truth intraocular scene: eye, instruments and target.

use serde::{Deserialize, Serialize};

use crate::geometry::{cast_shadow, retina_clearance, EyeModel, GeometryError, Vec3};
use crate::kinematics::{LightProbeState, NeedleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Floating,
    Retinal,
}

impl TargetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Floating => "floating",
            Self::Retinal => "retinal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub position: Vec3,
}

impl TargetSpec {
    pub fn floating(position: Vec3) -> Self {
        Self { kind: TargetKind::Floating, position }
    }

    /// Retinal target on the lower retina under `(x, y)`.
    pub fn retinal_at(x: f64, y: f64, eye: &EyeModel) -> Option<Self> {
        eye.retina_z_below(x, y).map(|z| Self { kind: TargetKind::Retinal, position: Vec3::new(x, y, z) })
    }

    /// The target's shadow. A retinal target coincides with its own shadow.
    pub fn shadow(&self, light_tip: Vec3, eye: &EyeModel) -> Result<Vec3, GeometryError> {
        match self.kind {
            TargetKind::Retinal => Ok(self.position),
            TargetKind::Floating => cast_shadow(light_tip, self.position, eye),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeScene {
    pub eye: EyeModel,
    pub needle: NeedleState,
    pub light: LightProbeState,
    pub target: TargetSpec,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("light tip must be above the target")]
    LightBelowTarget,
    #[error("{0} tip is outside the eye")]
    OutsideEye(&'static str),
    #[error("target violates its kind: {0}")]
    BadTarget(&'static str),
}

impl EyeScene {
    pub fn validate(&self) -> Result<(), SceneError> {
        let light = self.light.tip();
        if light.z <= self.target.position.z {
            return Err(SceneError::LightBelowTarget);
        }
        if retina_clearance(light, &self.eye) <= 0.0 {
            return Err(SceneError::OutsideEye("light"));
        }
        if retina_clearance(self.needle.tip(), &self.eye) < 0.0 {
            return Err(SceneError::OutsideEye("needle"));
        }
        let c = retina_clearance(self.target.position, &self.eye);
        match self.target.kind {
            TargetKind::Floating if c <= 0.0 => Err(SceneError::BadTarget("floating target must be inside the eye")),
            TargetKind::Retinal if c.abs() > 1e-6 => {
                Err(SceneError::BadTarget("retinal target must lie on the retina"))
            }
            _ => Ok(()),
        }
    }
}
