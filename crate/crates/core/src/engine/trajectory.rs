// SPDX-License-Identifier: Apache-2.0

//! Depth profiles of a recorded episode, for plotting tip and shadow z over time.

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerPhase, Rationale};

use super::episode::EpisodeRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: u64,
    pub tip_z: f64,
    /// z of the needle-tip shadow on the retina; `None` if it could not be cast.
    pub shadow_tip_z: Option<f64>,
    pub target_z: f64,
    pub target_shadow_z: f64,
    pub phase: ControllerPhase,
    pub action: String,
    pub rationale: Option<Rationale>,
}

pub const TRAJECTORY_HEADER: [&str; 8] =
    ["step", "tip_z", "shadow_tip_z", "target_z", "target_shadow_z", "phase", "action", "rationale"];

pub fn trajectory_table(record: &EpisodeRecord) -> Vec<TrajectoryRow> {
    record
        .steps
        .iter()
        .map(|s| TrajectoryRow {
            step: s.step,
            tip_z: s.tip.z,
            shadow_tip_z: s.shadow_tip.map(|p| p.z),
            target_z: record.target.position.z,
            target_shadow_z: s.target_shadow.z,
            phase: s.phase,
            action: s.action.label(),
            rationale: s.rationale,
        })
        .collect()
}

impl TrajectoryRow {
    pub fn fields(&self) -> [String; 8] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.step.to_string(),
            self.tip_z.to_string(),
            opt(self.shadow_tip_z),
            self.target_z.to_string(),
            self.target_shadow_z.to_string(),
            self.phase.as_str().to_string(),
            self.action.clone(),
            self.rationale.map(|r| r.as_str().to_string()).unwrap_or_default(),
        ]
    }
}
