// SPDX-License-Identifier: Apache-2.0

//! The 2D observation available to the controller and quantities derived from it.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cast_shadow, project, EyeModel, Line2, Pixel, Vec3};
use crate::kinematics::{shaft_sample, shaft_tail_sample, ProbeState};
use crate::scene::EyeScene;

/// Lines closer than this to parallel are treated as parallel.
pub const PARALLEL_TOLERANCE_DEG: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("missing feature: {0}")]
    MissingFeature(&'static str),
    #[error("lines are too close to parallel to intersect")]
    IllConditioned,
    #[error("light-target ray and needle-shadow line are near parallel")]
    NearParallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneFeatures {
    pub p_lp: Pixel,
    pub p_n: Pixel,
    pub l_n: Option<Line2>,
    pub p_ns: Option<Pixel>,
    pub l_ns: Option<Line2>,
    pub p_t: Pixel,
    pub p_ts: Pixel,
    pub p_nrcm: Option<Pixel>,
}

impl SceneFeatures {
    pub fn shadow_visible(&self) -> bool {
        self.p_ns.is_some() && self.l_ns.is_some()
    }

    pub fn with_trocar(mut self, p_nrcm: Option<Pixel>) -> Self {
        self.p_nrcm = p_nrcm;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserveOptions {
    /// Std-dev of zero-mean pixel noise added to every observed point.
    pub noise_sigma_px: f64,
    /// Shaft points backing each fitted line.
    pub line_samples: usize,
    /// Length of shaft behind the tip whose shadow backs the shadow line.
    pub shadow_span_mm: f64,
    /// Needle and shadow tips closer than this are occluded.
    pub min_shadow_separation_px: f64,
}

impl Default for ObserveOptions {
    fn default() -> Self {
        Self { noise_sigma_px: 0.0, line_samples: 8, shadow_span_mm: 2.0, min_shadow_separation_px: 2.0 }
    }
}

/// A shadow is seen when it falls on the retinal (lower) hemisphere within the limbus disc.
fn shadow_in_view(s: Vec3, eye: &EyeModel) -> bool {
    s.z < 0.0 && eye.in_limbus_disc(project(s, eye))
}

/// Needle-tip shadow in 3D; `None` if the ray is degenerate.
pub fn needle_shadow(scene: &EyeScene) -> Option<Vec3> {
    cast_shadow(scene.light.tip(), scene.needle.tip(), &scene.eye).ok()
}

struct Jitter<'a, R: Rng + ?Sized> {
    rng: Option<&'a mut R>,
    dist: Option<Normal<f64>>,
}

impl<R: Rng + ?Sized> Jitter<'_, R> {
    fn apply(&mut self, p: Pixel) -> Pixel {
        match (&mut self.rng, &self.dist) {
            (Some(rng), Some(d)) => p.offset(d.sample(*rng), d.sample(*rng)),
            _ => p,
        }
    }
}

fn needle_line<R: Rng + ?Sized>(
    needle: &ProbeState,
    eye: &EyeModel,
    n: usize,
    jitter: &mut Jitter<'_, R>,
) -> Option<Line2> {
    let pts: Vec<Pixel> =
        shaft_sample(needle, n.max(2)).ok()?.into_iter().map(|p| jitter.apply(project(p, eye))).collect();
    Line2::fit(&pts).ok()
}

/// Noise-free observation.
pub fn observe(scene: &EyeScene, opts: &ObserveOptions) -> SceneFeatures {
    observe_inner::<rand::rngs::ThreadRng>(scene, opts, None)
}

/// Observation with optional pixel noise drawn from `rng`.
pub fn observe_with_rng<R: Rng + ?Sized>(scene: &EyeScene, opts: &ObserveOptions, rng: &mut R) -> SceneFeatures {
    observe_inner(scene, opts, Some(rng))
}

fn observe_inner<R: Rng + ?Sized>(scene: &EyeScene, opts: &ObserveOptions, rng: Option<&mut R>) -> SceneFeatures {
    let eye = &scene.eye;
    let dist = (opts.noise_sigma_px > 0.0).then(|| Normal::new(0.0, opts.noise_sigma_px).expect("finite sigma"));
    let mut jitter = Jitter { rng: if dist.is_some() { rng } else { None }, dist };

    let light_tip = scene.light.tip();
    let tip = scene.needle.tip();
    let p_lp = jitter.apply(project(light_tip, eye));
    let p_n = jitter.apply(project(tip, eye));
    let l_n = needle_line(&scene.needle, eye, opts.line_samples, &mut jitter).map(|l| l.anchored_at(p_n));

    let target = scene.target.position;
    let p_t = jitter.apply(project(target, eye));
    let p_ts = match scene.target.shadow(light_tip, eye) {
        Ok(s) => jitter.apply(project(s, eye)),
        Err(_) => p_t,
    };

    let (mut p_ns, mut l_ns) = (None, None);
    if let Some(shadow) = needle_shadow(scene).filter(|s| shadow_in_view(*s, eye)) {
        let ns = jitter.apply(project(shadow, eye));
        if ns.distance(p_n) > opts.min_shadow_separation_px {
            // Near the limbus only a short piece of the shaft shadow may be in view.
            let visible_tail = |span: f64| -> Vec<Vec3> {
                shaft_tail_sample(&scene.needle, opts.line_samples.max(2), span)
                    .unwrap_or_default()
                    .into_iter()
                    .filter_map(|p| cast_shadow(light_tip, p, eye).ok())
                    .filter(|s| shadow_in_view(*s, eye))
                    .collect()
            };
            let tail = [1.0, 0.25, 0.0625]
                .into_iter()
                .map(|f| visible_tail(opts.shadow_span_mm * f))
                .find(|t| t.len() >= 2)
                .unwrap_or_default();
            let pts: Vec<Pixel> = tail.into_iter().map(|s| jitter.apply(project(s, eye))).collect();
            if let Ok(line) = Line2::fit(&pts) {
                p_ns = Some(ns);
                l_ns = Some(line.anchored_at(ns));
            }
        }
    }

    SceneFeatures { p_lp, p_n, l_n, p_ns, l_ns, p_t, p_ts, p_nrcm: None }
}

/// Least-squares point closest (in summed squared perpendicular distance) to all lines.
pub fn estimate_trocar_projection(lines: &[Line2]) -> Result<Pixel, FeatureError> {
    let well_posed = lines
        .iter()
        .enumerate()
        .any(|(i, a)| lines[i + 1..].iter().any(|b| a.angle_to_deg(b) > PARALLEL_TOLERANCE_DEG));
    if lines.len() < 2 || !well_posed {
        return Err(FeatureError::IllConditioned);
    }
    // Normal equations: sum(n n^T) p = sum(n n^T q)
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for l in lines {
        let (nu, nv) = l.normal();
        let proj = nu * l.point.u + nv * l.point.v;
        a11 += nu * nu;
        a12 += nu * nv;
        a22 += nv * nv;
        b1 += nu * proj;
        b2 += nv * proj;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() < 1e-15 {
        return Err(FeatureError::IllConditioned);
    }
    Ok(Pixel::new((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det))
}

/// Intersection of the projected light-target ray with the needle-shadow line.
pub fn expected_shadow_position(f: &SceneFeatures) -> Result<Pixel, FeatureError> {
    let l_ns = f.l_ns.ok_or(FeatureError::MissingFeature("l_ns"))?;
    let ray = Line2::through(f.p_lp, f.p_t).ok_or(FeatureError::MissingFeature("l_lp_t"))?;
    ray.intersect(&l_ns, PARALLEL_TOLERANCE_DEG).ok_or(FeatureError::NearParallel)
}

/// Pixel distances and angles used by the controller. Optional entries are
/// `None` when an input feature is absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    pub d_n_t: f64,
    pub d_lp_ts: f64,
    pub d_ns_ts: Option<f64>,
    pub d_lp_esp: Option<f64>,
    pub d_n_ns: Option<f64>,
    pub d_nrcm_n: Option<f64>,
    pub d_nrcm_t: Option<f64>,
    pub dist_t_to_ln: Option<f64>,
    /// Degrees between the trocar-to-needle and trocar-to-target vectors.
    pub angle_alignment: Option<f64>,
}

pub fn need(v: Option<f64>, name: &'static str) -> Result<f64, FeatureError> {
    v.ok_or(FeatureError::MissingFeature(name))
}

pub fn distances(f: &SceneFeatures) -> Distances {
    let esp = expected_shadow_position(f).ok();
    let angle = f.p_nrcm.and_then(|c| {
        let (au, av) = f.p_n.sub(c);
        let (bu, bv) = f.p_t.sub(c);
        let (na, nb) = (au.hypot(av), bu.hypot(bv));
        (na > 0.0 && nb > 0.0).then(|| ((au * bu + av * bv) / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees())
    });
    Distances {
        d_n_t: f.p_n.distance(f.p_t),
        d_lp_ts: f.p_lp.distance(f.p_ts),
        d_ns_ts: f.p_ns.map(|p| p.distance(f.p_ts)),
        d_lp_esp: esp.map(|p| f.p_lp.distance(p)),
        d_n_ns: f.p_ns.map(|p| p.distance(f.p_n)),
        d_nrcm_n: f.p_nrcm.map(|c| c.distance(f.p_n)),
        d_nrcm_t: f.p_nrcm.map(|c| c.distance(f.p_t)),
        dist_t_to_ln: f.l_n.map(|l| l.distance_to(f.p_t)),
        angle_alignment: angle,
    }
}
