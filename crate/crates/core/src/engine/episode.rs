// SPDX-License-Identifier: Apache-2.0

//! The observe, decide, actuate loop for one target.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{Command, ControllerPhase, NavController, Rationale};
use crate::features::{distances, needle_shadow, observe_with_rng, SceneFeatures};
use crate::geometry::{retina_clearance, Vec3};
use crate::kinematics::{apply_step, apply_step_toward, StepCommand, StepSizes};
use crate::scene::{EyeScene, TargetKind, TargetSpec};

use super::config::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Stuck,
    Degenerate,
    SafetyAbort,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Success => "Success",
            Self::Stuck => "Stuck",
            Self::Degenerate => "Degenerate",
            Self::SafetyAbort => "SafetyAbort",
        }
    }
}

/// What a logged step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    Needle(StepCommand),
    Light(StepCommand),
    Done,
    NeedsLightAdjustment,
    /// The controller could not act on the image.
    Abstain,
}

impl StepAction {
    pub fn label(&self) -> String {
        match self {
            Self::Needle(c) => c.name().to_string(),
            Self::Light(c) => format!("light_{}", c.name()),
            Self::Done => "Done".into(),
            Self::NeedsLightAdjustment => "NeedsLightAdjustment".into(),
            Self::Abstain => "Abstain".into(),
        }
    }
}

/// One row of the trajectory: the observed pose and the action taken from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub phase: ControllerPhase,
    pub action: StepAction,
    pub rationale: Option<Rationale>,
    pub r: f64,
    pub theta_h: f64,
    pub theta_v: f64,
    pub tip: Vec3,
    /// 3D needle-tip shadow on the retina.
    pub shadow_tip: Option<Vec3>,
    pub light_tip: Vec3,
    /// 3D target shadow for the current light pose.
    pub target_shadow: Vec3,
    pub features: SceneFeatures,
    pub retina_clearance_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub seed: u64,
    pub target: TargetSpec,
    pub outcome: Outcome,
    /// Tip z minus target z at the final pose.
    pub depth_error_mm: f64,
    pub xy_error_mm: f64,
    pub shadow_xy_error_px: Option<f64>,
    /// Retina clearance of the final tip.
    pub needle_retina_mm: f64,
    pub min_retina_clearance_mm: f64,
    pub step_count: u64,
    pub light_adjustments: u32,
    /// Times the step sizes were halved after a stall.
    pub step_refinements: u32,
    pub steps: Vec<StepRecord>,
}

impl EpisodeRecord {
    pub fn kind(&self) -> TargetKind {
        self.target.kind
    }

    /// Whether the first occurrences of the navigation phases appear in order.
    pub fn phases_ordered(&self) -> bool {
        let order = [
            ControllerPhase::Calibrating,
            ControllerPhase::HorizontalAlign,
            ControllerPhase::ShadowEnable,
            ControllerPhase::ShadowAlign,
        ];
        let firsts: Vec<usize> = order.iter().filter_map(|ph| self.steps.iter().position(|s| s.phase == *ph)).collect();
        firsts.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn has_rationale(&self, r: Rationale) -> bool {
        self.steps.iter().any(|s| s.rationale == Some(r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    OnDegenerate,
    AtStep(u64),
}

/// A scripted light motion: `count` repetitions of `command` applied to the light probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub trigger: Trigger,
    pub command: StepCommand,
    #[serde(default = "one")]
    pub count: u32,
}

fn one() -> u32 {
    1
}

pub type LightScript = Vec<ScriptEntry>;

struct Runner<'a> {
    cfg: &'a SimConfig,
    step_sizes: StepSizes,
    scene: EyeScene,
    rng: ChaCha8Rng,
    steps: Vec<StepRecord>,
    light_adjustments: u32,
    min_clearance: f64,
}

impl Runner<'_> {
    fn observe(&mut self) -> SceneFeatures {
        observe_with_rng(&self.scene, &self.cfg.observe, &mut self.rng)
    }

    fn log(&mut self, f: &SceneFeatures, phase: ControllerPhase, action: StepAction, rationale: Option<Rationale>) {
        let s = &self.scene;
        let tip = s.needle.tip();
        let light_tip = s.light.tip();
        let clearance = retina_clearance(tip, &s.eye);
        self.min_clearance = self.min_clearance.min(clearance);
        self.steps.push(StepRecord {
            step: self.steps.len() as u64,
            phase,
            action,
            rationale,
            r: s.needle.r,
            theta_h: s.needle.theta_h,
            theta_v: s.needle.theta_v,
            tip,
            shadow_tip: needle_shadow(s),
            light_tip,
            target_shadow: s.target.shadow(light_tip, &s.eye).unwrap_or(s.target.position),
            features: *f,
            retina_clearance_mm: clearance,
        });
    }

    /// Moves the needle unless that would breach the retina.
    fn move_needle(&mut self, cmd: StepCommand) -> Result<(), Outcome> {
        let target = Some(self.scene.target.position);
        let next = apply_step_toward(&self.scene.needle, cmd, &self.step_sizes, target).map_err(|_| Outcome::Stuck)?;
        if retina_clearance(next.tip(), &self.scene.eye) < 0.0 {
            return Err(Outcome::SafetyAbort);
        }
        self.scene.needle = next;
        Ok(())
    }

    fn move_light(&mut self, entry: &ScriptEntry, phase: ControllerPhase) {
        if entry.count == 0 {
            return;
        }
        for _ in 0..entry.count {
            let f = self.observe();
            self.log(&f, phase, StepAction::Light(entry.command), None);
            let Ok(next) = apply_step(&self.scene.light, entry.command, &self.cfg.steps) else { break };
            if retina_clearance(next.tip(), &self.scene.eye) <= 0.0 {
                break;
            }
            self.scene.light = next;
        }
        self.light_adjustments += 1;
    }

    fn calibrate(&mut self, controller: &mut NavController) -> Result<(), Outcome> {
        let k = self.cfg.calibration.half_span_steps;
        let mut lines = Vec::new();
        let wiggle = |runner: &mut Self, cmd: StepCommand, n: u32| -> Result<(), Outcome> {
            for _ in 0..n {
                if runner.steps.len() as u64 >= runner.cfg.limits.max_steps {
                    return Err(Outcome::Stuck);
                }
                let f = runner.observe();
                runner.log(
                    &f,
                    ControllerPhase::Calibrating,
                    StepAction::Needle(cmd),
                    Some(Rationale::CalibrationWiggle),
                );
                runner.move_needle(cmd)?;
            }
            Ok(())
        };
        let capture = |runner: &mut Self, lines: &mut Vec<_>| {
            if let Some(l) = runner.observe().l_n {
                lines.push(l);
            }
        };
        wiggle(self, StepCommand::HCcw, k)?;
        capture(self, &mut lines);
        wiggle(self, StepCommand::HCw, k)?;
        capture(self, &mut lines);
        wiggle(self, StepCommand::HCw, k)?;
        capture(self, &mut lines);
        wiggle(self, StepCommand::HCcw, k)?;
        controller.calibrate(&lines).map(|_| ()).map_err(|_| Outcome::Degenerate)
    }
}

/// Tracks the best needle/shadow-to-target pixel distance for stuck detection.
///
/// Entering a navigation phase for the first time restarts the window;
/// falling back to an earlier phase does not.
struct Progress {
    best: f64,
    since: u64,
    furthest: ControllerPhase,
}

impl Progress {
    fn new(phase: ControllerPhase, step: u64) -> Self {
        Self { best: f64::INFINITY, since: step, furthest: phase }
    }

    fn metric(f: &SceneFeatures, penalty: f64) -> f64 {
        let d = distances(f);
        d.d_n_t + d.d_ns_ts.unwrap_or(penalty)
    }

    /// Returns true when no progress has been seen for `window` steps.
    fn update(&mut self, metric: f64, phase: ControllerPhase, step: u64, window: u64, min_gain: f64) -> bool {
        let advanced = phase > self.furthest && phase <= ControllerPhase::ShadowAlign;
        if advanced {
            self.furthest = phase;
            self.best = metric;
            self.since = step;
        } else if metric < self.best - min_gain {
            self.best = metric;
            self.since = step;
        }
        step - self.since >= window
    }
}

/// Runs one episode without light adjustments.
pub fn run_episode(scene: &EyeScene, cfg: &SimConfig) -> EpisodeRecord {
    run_episode_with_script(scene, cfg, &[])
}

/// Runs one episode, applying scripted light motions when their triggers fire.
pub fn run_episode_with_script(scene: &EyeScene, cfg: &SimConfig, script: &[ScriptEntry]) -> EpisodeRecord {
    let mut runner = Runner {
        cfg,
        step_sizes: cfg.steps,
        scene: *scene,
        rng: ChaCha8Rng::seed_from_u64(scene.rng_seed),
        steps: Vec::new(),
        light_adjustments: 0,
        min_clearance: f64::INFINITY,
    };
    let mut controller = NavController::new(cfg.thresholds, cfg.steps.delta_h_deg);
    let mut pending: Vec<ScriptEntry> = script.to_vec();
    let penalty = 2.0 * cfg.eye.image_size_px;
    let max_steps = cfg.limits.max_steps;
    let mut refinements = 0;

    let outcome = 'run: {
        if let Err(o) = runner.calibrate(&mut controller) {
            break 'run o;
        }
        let mut progress = Progress::new(controller.phase(), runner.steps.len() as u64);
        let mut tick: u64 = 0;
        loop {
            let at_step: Vec<ScriptEntry> =
                pending.iter().filter(|e| e.trigger == Trigger::AtStep(tick)).copied().collect();
            pending.retain(|e| e.trigger != Trigger::AtStep(tick));
            for e in &at_step {
                runner.move_light(e, controller.phase());
            }

            if runner.steps.len() as u64 >= max_steps {
                break 'run Outcome::Stuck;
            }
            let f = runner.observe();
            let decision = match controller.tick(&f) {
                Ok(d) => d,
                Err(_) => {
                    runner.log(&f, controller.phase(), StepAction::Abstain, None);
                    break 'run Outcome::Degenerate;
                }
            };
            match decision.command {
                Command::Done => {
                    runner.log(&f, decision.phase, StepAction::Done, Some(decision.rationale));
                    break 'run if runner.min_clearance > 0.0 { Outcome::Success } else { Outcome::SafetyAbort };
                }
                Command::NeedsLightAdjustment => {
                    runner.log(&f, decision.phase, StepAction::NeedsLightAdjustment, Some(decision.rationale));
                    let Some(i) = pending.iter().position(|e| e.trigger == Trigger::OnDegenerate) else {
                        break 'run Outcome::Degenerate;
                    };
                    let entry = pending.remove(i);
                    runner.move_light(&entry, ControllerPhase::Degenerate);
                    controller.resume();
                    progress = Progress::new(controller.phase(), runner.steps.len() as u64);
                }
                Command::Step(cmd) => {
                    runner.log(&f, decision.phase, StepAction::Needle(cmd), Some(decision.rationale));
                    if let Err(o) = runner.move_needle(cmd) {
                        break 'run o;
                    }
                }
            }
            tick += 1;
            let metric = Progress::metric(&f, penalty);
            let step = runner.steps.len() as u64;
            let limits = &cfg.limits;
            if progress.update(metric, controller.phase(), step, limits.stuck_window, limits.stuck_min_improvement_px) {
                if refinements >= limits.refinements {
                    break 'run Outcome::Stuck;
                }
                refinements += 1;
                runner.step_sizes = runner.step_sizes.halved();
                controller.set_delta_h(runner.step_sizes.delta_h_deg);
                progress = Progress::new(controller.phase(), step);
            }
        }
    };

    let final_f = runner.observe();
    let tip = runner.scene.needle.tip();
    let target = runner.scene.target.position;
    let clearance = retina_clearance(tip, &runner.scene.eye);
    EpisodeRecord {
        episode: 0,
        seed: scene.rng_seed,
        target: scene.target,
        outcome,
        depth_error_mm: tip.z - target.z,
        xy_error_mm: tip.xy_distance(target),
        shadow_xy_error_px: distances(&final_f).d_ns_ts,
        needle_retina_mm: clearance,
        min_retina_clearance_mm: runner.min_clearance.min(clearance),
        step_count: runner.steps.len() as u64,
        light_adjustments: runner.light_adjustments,
        step_refinements: refinements,
        steps: runner.steps,
    }
}
