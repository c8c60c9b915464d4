// SPDX-License-Identifier: Apache-2.0

//! Image-feedback navigation: horizontal alignment, shadow enabling and shadow alignment.
//!
//! The controller sees only [`SceneFeatures`]. Apart from its phase and the
//! calibrated trocar projection it keeps no memory between ticks.

use serde::{Deserialize, Serialize};

use crate::features::{
    distances, estimate_trocar_projection, expected_shadow_position, need, FeatureError, SceneFeatures,
};
use crate::geometry::{Line2, Pixel};
use crate::kinematics::{StepCommand, VerticalDir};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Angle bound for rough alignment, degrees.
    pub sigma_align_ang: f64,
    /// Target-to-needle-line bound for precise alignment, pixels.
    pub sigma_align_dis: f64,
    /// Needle-target distance below which precise alignment applies, pixels.
    pub sigma_close: f64,
    /// Overlap threshold for termination and safety, pixels.
    pub sigma_app: f64,
    /// Multiplier on `sigma_align_dis` while shadow alignment runs.
    pub loosen_factor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { sigma_align_ang: 3.0, sigma_align_dis: 2.0, sigma_close: 100.0, sigma_app: 15.0, loosen_factor: 3.0 }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), &'static str> {
        let all = [self.sigma_align_ang, self.sigma_align_dis, self.sigma_close, self.sigma_app, self.loosen_factor];
        if all.iter().any(|v| !(*v > 0.0)) {
            return Err("thresholds must be strictly positive");
        }
        if self.sigma_align_dis >= self.sigma_close {
            return Err("sigma_align_dis must be smaller than sigma_close");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ControllerPhase {
    Calibrating,
    HorizontalAlign,
    ShadowEnable,
    ShadowAlign,
    Done,
    Degenerate,
}

impl ControllerPhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Calibrating => "Calibrating",
            Self::HorizontalAlign => "HorizontalAlign",
            Self::ShadowEnable => "ShadowEnable",
            Self::ShadowAlign => "ShadowAlign",
            Self::Done => "Done",
            Self::Degenerate => "Degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Command {
    Step(StepCommand),
    Done,
    NeedsLightAdjustment,
}

/// Why a decision fired. The string forms are stable log tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    CalibrationWiggle,
    RoughAngleAlignment,
    DistanceAlignment,
    AxialApproach,
    AxialBackoff,
    ShadowEnablingDescent,
    StartIoct,
    SafetyRetreat,
    AxialInsertion,
    AxialWithdrawal,
    TrajectoryAboveTarget,
    TrajectoryBelowTarget,
    EspUndefined,
    Terminal,
}

impl Rationale {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::CalibrationWiggle => "calibration_wiggle",
            Self::RoughAngleAlignment => "rough_angle_alignment",
            Self::DistanceAlignment => "distance_alignment",
            Self::AxialApproach => "axial_approach",
            Self::AxialBackoff => "axial_backoff",
            Self::ShadowEnablingDescent => "shadow_enabling_descent",
            Self::StartIoct => "start_ioct",
            Self::SafetyRetreat => "safety_retreat",
            Self::AxialInsertion => "axial_insertion",
            Self::AxialWithdrawal => "axial_withdrawal",
            Self::TrajectoryAboveTarget => "trajectory_above_target",
            Self::TrajectoryBelowTarget => "trajectory_below_target",
            Self::EspUndefined => "esp_undefined",
            Self::Terminal => "terminal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlDecision {
    pub command: Command,
    pub phase: ControllerPhase,
    pub rationale: Rationale,
}

impl ControlDecision {
    fn step(cmd: StepCommand, phase: ControllerPhase, rationale: Rationale) -> Self {
        Self { command: Command::Step(cmd), phase, rationale }
    }
}

/// Result of a single stage: act now, or hand over to the next stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Act(ControlDecision),
    Advance,
}

/// Image rotation (radians, in the u-v frame) produced by an azimuthal step.
/// The image v axis is flipped, so a counter-clockwise world step turns the
/// projected needle by a negative u-v angle.
fn image_rotation(cmd: StepCommand, delta_h_deg: f64) -> f64 {
    match cmd {
        StepCommand::HCcw => -delta_h_deg.to_radians(),
        StepCommand::HCw => delta_h_deg.to_radians(),
        _ => 0.0,
    }
}

fn angle_at(center: Pixel, a: Pixel, b: Pixel) -> f64 {
    let (au, av) = a.sub(center);
    let (bu, bv) = b.sub(center);
    let c = (au * bu + av * bv) / (au.hypot(av) * bu.hypot(bv));
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Picks the azimuthal step whose predicted image lowers `measure`, if either does.
fn lookahead_h(delta_h_deg: f64, measure: impl Fn(f64) -> f64) -> Option<StepCommand> {
    let now = measure(0.0);
    let cw = measure(image_rotation(StepCommand::HCw, delta_h_deg));
    let ccw = measure(image_rotation(StepCommand::HCcw, delta_h_deg));
    let (cmd, best) = if cw <= ccw { (StepCommand::HCw, cw) } else { (StepCommand::HCcw, ccw) };
    (best < now).then_some(cmd)
}

/// Horizontal alignment for one tick.
///
/// Far from the target the projected needle direction is compared with the
/// trocar-to-target direction; close to it the target's distance to the
/// needle line is used. `loosened` widens the distance bound. When no single
/// step would reduce the misalignment, it is as small as the step size allows.
pub fn decide_horizontal(
    f: &SceneFeatures,
    th: &Thresholds,
    delta_h_deg: f64,
    loosened: bool,
    phase: ControllerPhase,
) -> Result<Verdict, FeatureError> {
    let nrcm = f.p_nrcm.ok_or(FeatureError::MissingFeature("p_nrcm"))?;
    let d = distances(f);
    if d.d_n_t > th.sigma_close {
        let angle = need(d.angle_alignment, "angle_alignment")?;
        if angle > th.sigma_align_ang {
            if let Some(cmd) = lookahead_h(delta_h_deg, |rot| angle_at(nrcm, f.p_n.rotated_about(nrcm, rot), f.p_t)) {
                return Ok(Verdict::Act(ControlDecision::step(cmd, phase, Rationale::RoughAngleAlignment)));
            }
        }
    } else {
        let l_n = f.l_n.ok_or(FeatureError::MissingFeature("l_n"))?;
        let bound = if loosened { th.sigma_align_dis * th.loosen_factor } else { th.sigma_align_dis };
        if need(d.dist_t_to_ln, "dist_t_to_ln")? > bound {
            let step = lookahead_h(delta_h_deg, |rot| {
                let p = l_n.point.rotated_about(nrcm, rot);
                let q = l_n.at(1.0).rotated_about(nrcm, rot);
                Line2::through(p, q).map_or(f64::INFINITY, |l| l.distance_to(f.p_t))
            });
            if let Some(cmd) = step {
                return Ok(Verdict::Act(ControlDecision::step(cmd, phase, Rationale::DistanceAlignment)));
            }
        }
    }
    Ok(Verdict::Advance)
}

/// Shadow enabling: close in axially, then tilt toward the retina until the
/// needle shadow appears.
pub fn decide_shadow_enable(f: &SceneFeatures, th: &Thresholds) -> Verdict {
    let d = distances(f);
    let phase = ControllerPhase::ShadowEnable;
    if d.d_n_t > th.sigma_close {
        let overshoot = matches!((d.d_nrcm_n, d.d_nrcm_t), (Some(n), Some(t)) if n > t);
        return Verdict::Act(if overshoot {
            ControlDecision::step(StepCommand::ROut, phase, Rationale::AxialBackoff)
        } else {
            ControlDecision::step(StepCommand::RIn, phase, Rationale::AxialApproach)
        });
    }
    if !f.shadow_visible() {
        return Verdict::Act(ControlDecision::step(
            StepCommand::VWithRCompensate(VerticalDir::Down),
            phase,
            Rationale::ShadowEnablingDescent,
        ));
    }
    Verdict::Advance
}

/// Shadow alignment decision table.
///
/// Termination is checked first, then the safety retreat, then axial motion
/// along an aligned trajectory, then vertical correction.
pub fn decide_shadow_align(f: &SceneFeatures, th: &Thresholds) -> Result<ControlDecision, FeatureError> {
    let phase = ControllerPhase::ShadowAlign;
    let esp = match expected_shadow_position(f) {
        Ok(p) => p,
        Err(FeatureError::NearParallel) => {
            return Ok(ControlDecision {
                command: Command::NeedsLightAdjustment,
                phase: ControllerPhase::Degenerate,
                rationale: Rationale::EspUndefined,
            })
        }
        Err(e) => return Err(e),
    };
    let d = distances(f);
    let p_ns = f.p_ns.ok_or(FeatureError::MissingFeature("p_ns"))?;
    let d_lp_esp = f.p_lp.distance(esp);
    let d_ns_ts = p_ns.distance(f.p_ts);
    let d_n_ns = p_ns.distance(f.p_n);
    let app = th.sigma_app;

    let esp_aligned = (d_lp_esp - d.d_lp_ts).abs() <= app;
    if esp_aligned && d.d_n_t <= app && d_ns_ts <= app {
        return Ok(ControlDecision {
            command: Command::Done,
            phase: ControllerPhase::Done,
            rationale: Rationale::StartIoct,
        });
    }
    if d_n_ns <= app {
        return Ok(ControlDecision::step(StepCommand::ROutAndVUp, phase, Rationale::SafetyRetreat));
    }
    if esp_aligned {
        let behind = need(d.d_nrcm_n, "p_nrcm")? < need(d.d_nrcm_t, "p_nrcm")?;
        return Ok(if behind {
            ControlDecision::step(StepCommand::RIn, phase, Rationale::AxialInsertion)
        } else {
            ControlDecision::step(StepCommand::ROut, phase, Rationale::AxialWithdrawal)
        });
    }
    Ok(if d.d_lp_ts < d_lp_esp {
        ControlDecision::step(StepCommand::VDown, phase, Rationale::TrajectoryAboveTarget)
    } else {
        ControlDecision::step(StepCommand::VUp, phase, Rationale::TrajectoryBelowTarget)
    })
}

/// The per-episode state machine.
#[derive(Debug, Clone, PartialEq)]
pub struct NavController {
    thresholds: Thresholds,
    delta_h_deg: f64,
    phase: ControllerPhase,
    p_nrcm: Option<Pixel>,
}

impl NavController {
    pub fn new(thresholds: Thresholds, delta_h_deg: f64) -> Self {
        Self { thresholds, delta_h_deg, phase: ControllerPhase::Calibrating, p_nrcm: None }
    }

    pub fn phase(&self) -> ControllerPhase {
        self.phase
    }

    pub fn trocar_estimate(&self) -> Option<Pixel> {
        self.p_nrcm
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    /// Azimuthal step size assumed by the horizontal lookahead.
    pub fn set_delta_h(&mut self, delta_h_deg: f64) {
        self.delta_h_deg = delta_h_deg;
    }

    /// Estimates the trocar projection from needle lines captured at several azimuths.
    pub fn calibrate(&mut self, lines: &[Line2]) -> Result<Pixel, FeatureError> {
        match estimate_trocar_projection(lines) {
            Ok(p) => {
                self.p_nrcm = Some(p);
                self.phase = ControllerPhase::HorizontalAlign;
                Ok(p)
            }
            Err(e) => {
                self.phase = ControllerPhase::Degenerate;
                Err(e)
            }
        }
    }

    /// Leaves the degenerate phase after the light has been moved.
    pub fn resume(&mut self) {
        if self.phase == ControllerPhase::Degenerate && self.p_nrcm.is_some() {
            self.phase = ControllerPhase::ShadowEnable;
        }
    }

    /// One control decision for the current image.
    pub fn tick(&mut self, features: &SceneFeatures) -> Result<ControlDecision, FeatureError> {
        let terminal = |phase, command| ControlDecision { command, phase, rationale: Rationale::Terminal };
        match self.phase {
            ControllerPhase::Done => return Ok(terminal(ControllerPhase::Done, Command::Done)),
            ControllerPhase::Degenerate => {
                return Ok(terminal(ControllerPhase::Degenerate, Command::NeedsLightAdjustment))
            }
            ControllerPhase::Calibrating => return Err(FeatureError::MissingFeature("p_nrcm")),
            _ => {}
        }
        let f = features.with_trocar(self.p_nrcm);
        let th = self.thresholds;

        if self.phase == ControllerPhase::ShadowAlign {
            if !f.shadow_visible() {
                self.phase = ControllerPhase::ShadowEnable;
            } else {
                let sa = decide_shadow_align(&f, &th)?;
                let urgent = matches!(sa.command, Command::Done | Command::NeedsLightAdjustment)
                    || sa.rationale == Rationale::SafetyRetreat;
                if !urgent {
                    if let Verdict::Act(h) = decide_horizontal(&f, &th, self.delta_h_deg, true, self.phase)? {
                        return Ok(h);
                    }
                }
                self.phase = sa.phase;
                return Ok(sa);
            }
        }

        if let Verdict::Act(h) = decide_horizontal(&f, &th, self.delta_h_deg, false, self.phase)? {
            return Ok(h);
        }
        if self.phase == ControllerPhase::HorizontalAlign {
            self.phase = ControllerPhase::ShadowEnable;
        }
        match decide_shadow_enable(&f, &th) {
            Verdict::Act(d) => Ok(d),
            Verdict::Advance => {
                self.phase = ControllerPhase::ShadowAlign;
                let sa = decide_shadow_align(&f, &th)?;
                self.phase = sa.phase;
                Ok(sa)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(u: f64, v: f64) -> Pixel {
        Pixel::new(u, v)
    }

    /// Features with the trocar at the top of the image and the needle pointing down.
    fn base() -> SceneFeatures {
        let nrcm = px(512.0, 0.0);
        let p_n = px(512.0, 200.0);
        SceneFeatures {
            p_lp: px(150.0, 700.0),
            p_n,
            l_n: Line2::through(nrcm, p_n).map(|l| l.anchored_at(p_n)),
            p_ns: None,
            l_ns: None,
            p_t: px(512.0, 500.0),
            p_ts: px(600.0, 450.0),
            p_nrcm: Some(nrcm),
        }
    }

    /// Puts the target along a direction `angle_deg` off the needle at `dist` px from the tip.
    fn target_at_angle(f: &mut SceneFeatures, angle_deg: f64, reach: f64) {
        let nrcm = f.p_nrcm.unwrap();
        let a = angle_deg.to_radians();
        f.p_t = px(nrcm.u + reach * a.sin(), nrcm.v + reach * a.cos());
    }

    #[test]
    fn rough_angle_alignment_fires_above_threshold() {
        let th = Thresholds::default();
        let mut f = base();
        target_at_angle(&mut f, 5.0, 500.0);
        assert!(distances(&f).d_n_t > 100.0);
        let v = decide_horizontal(&f, &th, 0.2, false, ControllerPhase::HorizontalAlign).unwrap();
        let Verdict::Act(d) = v else { panic!("expected an H step") };
        assert_eq!(d.rationale, Rationale::RoughAngleAlignment);
        assert!(matches!(d.command, Command::Step(c) if c.is_horizontal()));

        target_at_angle(&mut f, 1.0, 500.0);
        assert_eq!(decide_horizontal(&f, &th, 0.2, false, ControllerPhase::HorizontalAlign).unwrap(), Verdict::Advance);
    }

    #[test]
    fn distance_alignment_close_to_target() {
        let th = Thresholds::default();
        let mut f = base();
        f.p_t = px(513.0, 250.0);
        assert_eq!(decide_horizontal(&f, &th, 0.2, false, ControllerPhase::HorizontalAlign).unwrap(), Verdict::Advance);
        f.p_t = px(520.0, 250.0);
        let Verdict::Act(d) = decide_horizontal(&f, &th, 0.2, false, ControllerPhase::HorizontalAlign).unwrap() else {
            panic!()
        };
        assert_eq!(d.rationale, Rationale::DistanceAlignment);
        // 5 px is inside the loosened bound of 6 px.
        f.p_t = px(517.0, 250.0);
        assert_eq!(decide_horizontal(&f, &th, 0.2, true, ControllerPhase::ShadowAlign).unwrap(), Verdict::Advance);
    }

    #[test]
    fn lookahead_turns_toward_target() {
        let th = Thresholds::default();
        for side in [-1.0, 1.0] {
            let mut f = base();
            target_at_angle(&mut f, 10.0 * side, 600.0);
            let before = distances(&f).angle_alignment.unwrap();
            let Verdict::Act(d) = decide_horizontal(&f, &th, 0.2, false, ControllerPhase::HorizontalAlign).unwrap()
            else {
                panic!()
            };
            let Command::Step(cmd) = d.command else { panic!() };
            let nrcm = f.p_nrcm.unwrap();
            f.p_n = f.p_n.rotated_about(nrcm, image_rotation(cmd, 0.2));
            assert!(distances(&f).angle_alignment.unwrap() < before);
        }
    }

    #[test]
    fn shadow_enable_cases() {
        let th = Thresholds::default();
        let mut f = base();
        f.p_t = px(512.0, 450.0);
        let Verdict::Act(d) = decide_shadow_enable(&f, &th) else { panic!() };
        assert_eq!(d.command, Command::Step(StepCommand::RIn));
        f.p_t = px(512.0, 280.0);
        let Verdict::Act(d) = decide_shadow_enable(&f, &th) else { panic!() };
        assert_eq!(d.command, Command::Step(StepCommand::VWithRCompensate(VerticalDir::Down)));
        f.p_ns = Some(px(530.0, 230.0));
        f.l_ns = Line2::new(px(530.0, 230.0), (0.2, 1.0));
        assert_eq!(decide_shadow_enable(&f, &th), Verdict::Advance);
    }

    /// Shadow-alignment features laid out on a horizontal light-target ray.
    /// `esp_u` places the predicted shadow, `ns` the needle shadow tip.
    fn aligned_features(d_n_t: f64, ns: Pixel, esp_u: f64, ts_u: f64) -> SceneFeatures {
        let nrcm = px(0.0, -1000.0);
        let p_t = px(100.0, 0.0);
        let p_n = px(100.0, -d_n_t);
        SceneFeatures {
            p_lp: px(0.0, 0.0),
            p_n,
            l_n: Line2::through(nrcm, p_n).map(|l| l.anchored_at(p_n)),
            p_ns: Some(ns),
            l_ns: Line2::through(ns, px(esp_u, 0.0)),
            p_t,
            p_ts: px(ts_u, 0.0),
            p_nrcm: Some(nrcm),
        }
    }

    #[test]
    fn algorithm_cases() {
        let th = Thresholds::default();
        // |400 - 410| <= 15, both tips within 15 px: done.
        let f = aligned_features(10.0, px(410.0, -12.0), 400.0, 410.0);
        let d = decide_shadow_align(&f, &th).unwrap();
        assert_eq!((d.command, d.rationale), (Command::Done, Rationale::StartIoct));

        // Predicted shadow farther from the light than the target shadow.
        let f = aligned_features(80.0, px(360.0, -100.0), 380.0, 300.0);
        let d = decide_shadow_align(&f, &th).unwrap();
        assert_eq!(d.command, Command::Step(StepCommand::VDown));
        let f = aligned_features(80.0, px(200.0, -100.0), 250.0, 300.0);
        let d = decide_shadow_align(&f, &th).unwrap();
        assert_eq!(d.command, Command::Step(StepCommand::VUp));

        // Aligned, needle and its shadow within 8 px, not yet at the target.
        let f = aligned_features(60.0, px(104.0, -53.0), 305.0, 300.0);
        let d = decide_shadow_align(&f, &th).unwrap();
        assert_eq!((d.command, d.rationale), (Command::Step(StepCommand::ROutAndVUp), Rationale::SafetyRetreat));

        // Aligned and behind the target: insert.
        let f = aligned_features(60.0, px(280.0, -60.0), 305.0, 300.0);
        assert_eq!(decide_shadow_align(&f, &th).unwrap().command, Command::Step(StepCommand::RIn));
    }

    #[test]
    fn parallel_shadow_line_needs_light_adjustment() {
        let th = Thresholds::default();
        let mut f = aligned_features(60.0, px(280.0, 0.0), 305.0, 300.0);
        f.l_ns = Line2::new(px(280.0, 0.0), (1.0, 0.0));
        let d = decide_shadow_align(&f, &th).unwrap();
        assert_eq!(d.command, Command::NeedsLightAdjustment);
        assert_eq!(d.phase, ControllerPhase::Degenerate);
    }

    #[test]
    fn tick_keeps_alignment_during_shadow_align() {
        let th = Thresholds::default();
        let mut c = NavController::new(th, 0.2);
        let nrcm = px(0.0, -1000.0);
        c.calibrate(&[
            Line2::new(nrcm, (0.0, 1.0)).unwrap(),
            Line2::new(nrcm, (0.05, 1.0)).unwrap(),
            Line2::new(nrcm, (-0.05, 1.0)).unwrap(),
        ])
        .unwrap();
        c.phase = ControllerPhase::ShadowAlign;
        let mut f = aligned_features(60.0, px(280.0, -60.0), 305.0, 300.0);
        f.p_nrcm = None;
        f.p_t = px(115.0, 0.0);
        let d = c.tick(&f).unwrap();
        assert_eq!(d.rationale, Rationale::DistanceAlignment);
        assert_eq!(c.phase(), ControllerPhase::ShadowAlign);
        let again = c.tick(&f).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn done_is_absorbing() {
        let mut c = NavController::new(Thresholds::default(), 0.2);
        c.p_nrcm = Some(px(0.0, -1000.0));
        c.phase = ControllerPhase::ShadowAlign;
        let f = aligned_features(10.0, px(410.0, -12.0), 400.0, 410.0);
        assert_eq!(c.tick(&f).unwrap().command, Command::Done);
        assert_eq!(c.phase(), ControllerPhase::Done);
        assert_eq!(c.tick(&base()).unwrap().command, Command::Done);
    }

    #[test]
    fn calibration_rejects_identical_lines() {
        let mut c = NavController::new(Thresholds::default(), 0.2);
        let l = Line2::new(px(0.0, 0.0), (0.0, 1.0)).unwrap();
        assert_eq!(c.calibrate(&[l, l]), Err(FeatureError::IllConditioned));
        assert_eq!(c.phase(), ControllerPhase::Degenerate);
    }

    #[test]
    fn threshold_validation() {
        assert!(Thresholds::default().validate().is_ok());
        let bad = Thresholds { sigma_align_dis: 200.0, ..Thresholds::default() };
        assert!(bad.validate().is_err());
        let bad = Thresholds { sigma_app: 0.0, ..Thresholds::default() };
        assert!(bad.validate().is_err());
    }
}
