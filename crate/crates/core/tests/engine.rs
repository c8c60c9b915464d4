// SPDX-License-Identifier: Apache-2.0

#![allow(clippy::field_reassign_with_default)]

use std::path::PathBuf;

use shadownav_core::engine::{run_batch, run_indexed, NeedleSetup, Scenario, StepAction};
use shadownav_core::geometry::retina_clearance;
use shadownav_core::kinematics::forward_tip;
use shadownav_core::{
    run_episode, run_episode_with_script, ControllerPhase, Outcome, Rationale, ScriptEntry, SimConfig, StepCommand,
    TargetKind, TargetSpec, Trigger,
};

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn target_on_insertion_line_is_reached_by_pure_insertion() {
    let mut cfg = SimConfig::default();
    cfg.needle = NeedleSetup { r_mm: 11.0, theta_v_deg: 45.0, ..NeedleSetup::default() };
    let start = cfg.needle_state();
    let extra_mm = 3.0;
    let target = forward_tip(&shadownav_core::ProbeState { r: start.r + extra_mm, ..start });
    let scene = cfg.scene(TargetSpec::floating(target), 0);
    scene.validate().unwrap();

    let rec = run_episode(&scene, &cfg);
    assert_eq!(rec.outcome, Outcome::Success, "{:?}", rec.steps.last());
    let after: Vec<_> = rec.steps.iter().filter(|s| s.phase != ControllerPhase::Calibrating).collect();
    let moves: Vec<_> = after.iter().filter(|s| matches!(s.action, StepAction::Needle(_))).collect();
    assert!(moves.iter().all(|s| s.action == StepAction::Needle(StepCommand::RIn)), "{:?}", moves);
    let budget = (extra_mm / cfg.steps.delta_r_mm).ceil() as usize + 3;
    assert!(moves.len() <= budget, "{} insertions for budget {budget}", moves.len());
    assert!(rec.xy_error_mm < 0.2 && rec.depth_error_mm.abs() < 0.2);
}

#[test]
fn collinear_light_is_degenerate_until_the_light_is_rotated() {
    let sc = scenario("fig9_collinear.json");
    let cfg = SimConfig::default();

    let plain = sc.unscripted().run(&cfg).unwrap();
    assert_eq!(plain.outcome, Outcome::Degenerate);
    assert_eq!(plain.steps.last().unwrap().action, StepAction::NeedsLightAdjustment);

    let scripted = sc.run(&cfg).unwrap();
    assert_eq!(scripted.outcome, Outcome::Success);
    assert!(scripted.light_adjustments >= 1);
    assert!(scripted.steps.iter().any(|s| matches!(s.action, StepAction::Light(_))));
}

#[test]
fn single_step_budget_is_stuck() {
    let mut cfg = SimConfig::default();
    cfg.limits.max_steps = 1;
    let rec = run_indexed(&cfg, 3, 0).unwrap();
    assert_eq!(rec.outcome, Outcome::Stuck);
    assert!(rec.step_count <= 1);
}

#[test]
fn empty_and_noop_scripts_leave_the_episode_unchanged() {
    let cfg = SimConfig::default();
    let sc = scenario("floating_canonical.json");
    let scene = sc.scene(&cfg).unwrap();
    let cfg = sc.config(&cfg);
    let base = run_episode(&scene, &cfg);

    assert_eq!(run_episode_with_script(&scene, &cfg, &[]), base);
    let noop = [ScriptEntry { trigger: Trigger::AtStep(0), command: StepCommand::HCw, count: 0 }];
    assert_eq!(run_episode_with_script(&scene, &cfg, &noop).steps, base.steps);
}

#[test]
fn episodes_are_deterministic() {
    let cfg = SimConfig::default();
    for i in 0..5 {
        let a = run_indexed(&cfg, 9, i).unwrap();
        let b = run_indexed(&cfg, 9, i).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

#[test]
fn batch_matches_sequential_runs_in_index_order() {
    let cfg = SimConfig::default();
    let batch = run_batch(&cfg, 5, 24).unwrap();
    for (i, rec) in batch.iter().enumerate() {
        assert_eq!(rec.episode, i as u64);
        assert_eq!(rec, &run_indexed(&cfg, 5, i as u64).unwrap());
    }
}

#[test]
fn logs_are_phase_ordered_and_never_penetrate() {
    let cfg = SimConfig::default();
    for rec in run_batch(&cfg, 17, 120).unwrap() {
        assert!(rec.phases_ordered(), "episode {}", rec.episode);
        if rec.outcome != Outcome::SafetyAbort {
            assert!(rec.steps.iter().all(|s| s.retina_clearance_mm > 0.0), "episode {}", rec.episode);
            assert!(rec.min_retina_clearance_mm > 0.0);
        }
    }
}

#[test]
fn high_floating_targets_never_retreat() {
    let mut cfg = SimConfig::default();
    cfg.sampler.floating_fraction = 1.0;
    let recs = run_batch(&cfg, 23, 150).unwrap();
    let high: Vec<_> = recs.iter().filter(|r| retina_clearance(r.target.position, &cfg.eye) >= 2.0).collect();
    assert!(high.len() > 100);
    for r in high {
        assert_eq!(r.kind(), TargetKind::Floating);
        assert!(!r.has_rationale(Rationale::SafetyRetreat), "episode {}", r.episode);
    }
}
