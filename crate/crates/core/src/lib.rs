// SPDX-License-Identifier: Apache-2.0

//! Shadow-guided needle navigation for a simulated eye.
//!
//! A needle and a light probe enter the eye through trocars and pivot about
//! them. A top-down microscope sees the needle, its shadow on the retina and a
//! target. The controller moves the needle in discrete steps until tip and
//! shadow both meet the target and its shadow in the image.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

pub mod controller;
pub mod engine;
pub mod features;
pub mod geometry;
pub mod kinematics;
pub mod scene;

pub use controller::{Command, ControlDecision, ControllerPhase, NavController, Rationale, Thresholds};
pub use engine::{
    aggregate, run_batch, run_episode, run_episode_with_script, EpisodeRecord, Outcome, ScriptEntry, SimConfig,
    SummaryStats, TargetSampler, Trigger,
};
pub use features::{observe, FeatureError, ObserveOptions, SceneFeatures};
pub use geometry::{EyeModel, GeometryError, Line2, Pixel, Vec3};
pub use kinematics::{apply_step, apply_step_toward, NeedleState, ProbeState, StepCommand, StepSizes, VerticalDir};
pub use scene::{EyeScene, TargetKind, TargetSpec};
