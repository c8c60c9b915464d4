// SPDX-License-Identifier: Apache-2.0

//! Spherical remote-center-of-motion model for instruments entering through a trocar.
//!
//! An instrument is the tuple `(r, theta_h, theta_v)` anchored at its trocar:
//! `r` is the axial insertion depth, `theta_h` the azimuth about the vertical
//! through the trocar and `theta_v` the polar tilt away from straight down.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("step leaves the valid range: {0}")]
    RangeViolation(&'static str),
    #[error("shaft sampling needs at least 2 points, got {0}")]
    InvalidCount(usize),
}

/// Pose of an RCM-constrained instrument. Angles are in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeState {
    pub trocar: Vec3,
    pub r: f64,
    pub theta_h: f64,
    pub theta_v: f64,
}

pub type NeedleState = ProbeState;
pub type LightProbeState = ProbeState;

impl ProbeState {
    pub fn new(trocar: Vec3, r: f64, theta_h: f64, theta_v: f64) -> Self {
        Self { trocar, r, theta_h, theta_v }
    }

    /// Pose whose shaft points from `trocar` toward `aim`, inserted by `r`.
    pub fn aimed(trocar: Vec3, aim: Vec3, r: f64) -> Self {
        let (theta_h, theta_v) = angles_toward(trocar, aim);
        Self { trocar, r, theta_h, theta_v }
    }

    /// Unit shaft direction.
    pub fn direction(&self) -> Vec3 {
        shaft_direction(self.theta_h, self.theta_v)
    }

    pub fn tip(&self) -> Vec3 {
        forward_tip(self)
    }

    /// Horizontal length of the shaft as seen from above.
    pub fn projected_length(&self) -> f64 {
        self.r * self.theta_v.to_radians().sin()
    }
}

/// `(theta_h, theta_v)` in degrees of the direction `from -> to`.
pub fn angles_toward(from: Vec3, to: Vec3) -> (f64, f64) {
    let d = to - from;
    let theta_h = d.y.atan2(d.x).to_degrees();
    let theta_v = d.x.hypot(d.y).atan2(-d.z).to_degrees();
    (theta_h, theta_v)
}

pub fn shaft_direction(theta_h_deg: f64, theta_v_deg: f64) -> Vec3 {
    let (sh, ch) = theta_h_deg.to_radians().sin_cos();
    let (sv, cv) = theta_v_deg.to_radians().sin_cos();
    Vec3::new(sv * ch, sv * sh, -cv)
}

/// Tip position. The z coordinate depends on `r` and `theta_v` only, so an
/// azimuthal step leaves it bit-for-bit unchanged.
pub fn forward_tip(state: &ProbeState) -> Vec3 {
    let (sh, ch) = state.theta_h.to_radians().sin_cos();
    let (sv, cv) = state.theta_v.to_radians().sin_cos();
    let rho = state.r * sv;
    Vec3::new(state.trocar.x + rho * ch, state.trocar.y + rho * sh, state.trocar.z - state.r * cv)
}

/// `n` evenly spaced points from the trocar to the tip, both inclusive.
pub fn shaft_sample(state: &ProbeState, n: usize) -> Result<Vec<Vec3>, KinematicsError> {
    if n < 2 {
        return Err(KinematicsError::InvalidCount(n));
    }
    let tip = forward_tip(state);
    let last = (n - 1) as f64;
    Ok((0..n).map(|i| if i == n - 1 { tip } else { state.trocar.lerp(tip, i as f64 / last) }).collect())
}

/// `n` points on the last `length` millimeters of the shaft, ordered toward the tip.
pub fn shaft_tail_sample(state: &ProbeState, n: usize, length: f64) -> Result<Vec<Vec3>, KinematicsError> {
    if n < 2 {
        return Err(KinematicsError::InvalidCount(n));
    }
    let span = length.min(state.r);
    let dir = state.direction();
    let tip = forward_tip(state);
    let last = (n - 1) as f64;
    Ok((0..n).map(|i| if i == n - 1 { tip } else { tip - dir * (span * (last - i as f64) / last) }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerticalDir {
    #[serde(rename = "up")]
    Up,
    #[serde(rename = "down")]
    Down,
}

/// One discrete motion of an instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepCommand {
    #[serde(rename = "R_in")]
    RIn,
    #[serde(rename = "R_out")]
    ROut,
    #[serde(rename = "V_up")]
    VUp,
    #[serde(rename = "V_down")]
    VDown,
    #[serde(rename = "H_cw")]
    HCw,
    #[serde(rename = "H_ccw")]
    HCcw,
    /// Safety retreat: axial withdrawal and upward tilt in one step.
    #[serde(rename = "R_out_and_V_up")]
    ROutAndVUp,
    /// Vertical step followed by axial steps restoring the projected tip-target distance.
    #[serde(rename = "V_with_R_compensate")]
    VWithRCompensate(VerticalDir),
}

impl StepCommand {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RIn => "R_in",
            Self::ROut => "R_out",
            Self::VUp => "V_up",
            Self::VDown => "V_down",
            Self::HCw => "H_cw",
            Self::HCcw => "H_ccw",
            Self::ROutAndVUp => "R_out_and_V_up",
            Self::VWithRCompensate(VerticalDir::Up) => "V_up_with_R_compensate",
            Self::VWithRCompensate(VerticalDir::Down) => "V_down_with_R_compensate",
        }
    }

    pub fn is_horizontal(&self) -> bool {
        matches!(self, Self::HCw | Self::HCcw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepSizes {
    pub delta_r_mm: f64,
    pub delta_v_deg: f64,
    pub delta_h_deg: f64,
    /// Upper bound on axial steps taken by a compensated vertical step.
    pub max_compensation_steps: u32,
}

impl Default for StepSizes {
    fn default() -> Self {
        Self { delta_r_mm: 0.167, delta_v_deg: 0.2, delta_h_deg: 0.2, max_compensation_steps: 3 }
    }
}

impl StepSizes {
    /// Every step length halved.
    pub fn halved(&self) -> Self {
        Self {
            delta_r_mm: self.delta_r_mm / 2.0,
            delta_v_deg: self.delta_v_deg / 2.0,
            delta_h_deg: self.delta_h_deg / 2.0,
            ..*self
        }
    }
}

/// Applies one command. The trocar is never modified.
///
/// `V_down` lowers the tip (smaller polar angle) and `V_up` raises it. A
/// compensated vertical step measures the projected tip distance to the
/// trocar's vertical, see [`apply_step_toward`].
pub fn apply_step(state: &ProbeState, cmd: StepCommand, steps: &StepSizes) -> Result<ProbeState, KinematicsError> {
    apply_step_toward(state, cmd, steps, None)
}

/// Like [`apply_step`], with `target` as the reference for compensated steps.
///
/// After the vertical step, `V_with_R_compensate` inserts by `delta_r_mm` while
/// the projected tip-target distance exceeds its pre-step value and each
/// insertion still shortens it, at most `max_compensation_steps` times.
/// Without a target the projected insertion length is kept instead.
pub fn apply_step_toward(
    state: &ProbeState,
    cmd: StepCommand,
    steps: &StepSizes,
    target: Option<Vec3>,
) -> Result<ProbeState, KinematicsError> {
    let mut next = *state;
    match cmd {
        StepCommand::RIn => next.r += steps.delta_r_mm,
        StepCommand::ROut => next.r -= steps.delta_r_mm,
        StepCommand::VUp => next.theta_v += steps.delta_v_deg,
        StepCommand::VDown => next.theta_v -= steps.delta_v_deg,
        StepCommand::HCw => next.theta_h -= steps.delta_h_deg,
        StepCommand::HCcw => next.theta_h += steps.delta_h_deg,
        StepCommand::ROutAndVUp => {
            next.r -= steps.delta_r_mm;
            next.theta_v += steps.delta_v_deg;
        }
        StepCommand::VWithRCompensate(dir) => {
            let dist = |s: &ProbeState| match target {
                Some(t) => s.tip().xy_distance(t),
                None => -s.projected_length(),
            };
            let before = dist(state);
            next.theta_v += match dir {
                VerticalDir::Up => steps.delta_v_deg,
                VerticalDir::Down => -steps.delta_v_deg,
            };
            check_range(&next)?;
            for _ in 0..steps.max_compensation_steps {
                let now = dist(&next);
                if now <= before {
                    break;
                }
                let deeper = ProbeState { r: next.r + steps.delta_r_mm, ..next };
                if dist(&deeper) >= now {
                    break;
                }
                next = deeper;
            }
        }
    }
    check_range(&next)?;
    Ok(next)
}

fn check_range(s: &ProbeState) -> Result<(), KinematicsError> {
    if s.r < 0.0 {
        return Err(KinematicsError::RangeViolation("insertion depth would be negative"));
    }
    if !(0.0..90.0).contains(&s.theta_v) {
        return Err(KinematicsError::RangeViolation("polar angle must stay in [0, 90) degrees"));
    }
    Ok(())
}
