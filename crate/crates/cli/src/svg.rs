// SPDX-License-Identifier: Apache-2.0

//! Per-step SVG frames of the microscope image.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use shadownav_core::engine::{EpisodeRecord, StepRecord};
use shadownav_core::features::expected_shadow_position;
use shadownav_core::geometry::{cast_shadow, project};
use shadownav_core::kinematics::shaft_sample;
use shadownav_core::{EyeModel, Pixel, ProbeState, Vec3};

const NEEDLE: &str = "#1f9e3a";
const SHADOW: &str = "#3c3c3c";
const TARGET: &str = "#e01010";
const TARGET_SHADOW: &str = "#7a0000";
const LIGHT: &str = "#d9a400";
const ESP: &str = "#1060d0";

/// Fixed scene parts a frame needs besides the step itself.
#[derive(Debug, Clone, Copy)]
pub struct FrameContext {
    pub eye: EyeModel,
    pub needle_trocar: Vec3,
    pub light_trocar: Vec3,
}

pub fn frame_name(step: u64) -> String {
    format!("frame_{step:06}.svg")
}

fn polyline(points: &[Pixel], color: &str, width: f64, out: &mut String) {
    if points.len() < 2 {
        return;
    }
    let pts: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", p.u, p.v)).collect();
    let _ = writeln!(
        out,
        r#"  <polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}" stroke-linecap="round"/>"#,
        pts.join(" ")
    );
}

fn dot(p: Pixel, r: f64, color: &str, out: &mut String) {
    let _ = writeln!(out, r#"  <circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{color}"/>"#, p.u, p.v);
}

pub fn render_frame(ctx: &FrameContext, step: &StepRecord) -> String {
    let eye = &ctx.eye;
    let size = eye.image_size_px;
    let c = eye.image_center();
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(out, r##"  <rect width="{size}" height="{size}" fill="#101010"/>"##);
    let _ = writeln!(
        out,
        r##"  <circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="#f2d4c4" stroke="#808080"/>"##,
        c.u,
        c.v,
        eye.limbus_radius_mm * eye.px_per_mm
    );

    let needle = ProbeState::new(ctx.needle_trocar, step.r, step.theta_h, step.theta_v);
    let shaft = shaft_sample(&needle, 64).unwrap_or_default();
    let shadow: Vec<Pixel> = shaft
        .iter()
        .filter_map(|p| cast_shadow(step.light_tip, *p, eye).ok())
        .filter(|s| s.z < 0.0)
        .map(|s| project(s, eye))
        .collect();
    polyline(&shadow, SHADOW, 5.0, &mut out);
    dot(step.features.p_ts, 7.0, TARGET_SHADOW, &mut out);

    let light = [project(ctx.light_trocar, eye), step.features.p_lp];
    polyline(&light, LIGHT, 4.0, &mut out);
    dot(step.features.p_lp, 6.0, LIGHT, &mut out);

    let needle_px: Vec<Pixel> = shaft.iter().map(|p| project(*p, eye)).collect();
    polyline(&needle_px, NEEDLE, 5.0, &mut out);
    dot(step.features.p_t, 7.0, TARGET, &mut out);

    if let Ok(esp) = expected_shadow_position(&step.features) {
        let _ = writeln!(
            out,
            r#"  <path d="M {:.2} {:.2} l 16 16 m -16 0 l 16 -16" stroke="{ESP}" stroke-width="3"/>"#,
            esp.u - 8.0,
            esp.v - 8.0
        );
    }
    let _ = writeln!(
        out,
        r#"  <text x="16" y="32" font-family="monospace" font-size="22" fill="white">step {} {} {}</text>"#,
        step.step,
        step.phase.as_str(),
        step.action.label()
    );
    out.push_str("</svg>\n");
    out
}

/// Writes one frame per logged step into `dir`.
pub fn write_frames(dir: &Path, ctx: &FrameContext, rec: &EpisodeRecord) -> Result<usize> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for s in &rec.steps {
        let path = dir.join(frame_name(s.step));
        std::fs::write(&path, render_frame(ctx, s)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(rec.steps.len())
}
