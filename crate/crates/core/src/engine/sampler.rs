// SPDX-License-Identifier: Apache-2.0

//! Random intraocular targets drawn from per-axis normal distributions.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cast_shadow, project, retina_clearance, EyeModel, Vec3};
use crate::scene::{TargetKind, TargetSpec};

/// Height above a target whose shadow must be visible for the target to be admissible.
pub const APPROACH_HEIGHT_MM: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("no valid target after {0} attempts")]
    SamplingExhausted(u32),
}

/// How the second number of each axis pair is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadKind {
    Variance,
    StdDev,
}

/// Mean and spread (variance or standard deviation, see [`SpreadKind`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisDist {
    pub mean: f64,
    pub spread: f64,
}

impl AxisDist {
    pub const fn new(mean: f64, spread: f64) -> Self {
        Self { mean, spread }
    }

    fn normal(&self, kind: SpreadKind) -> Normal<f64> {
        let sd = match kind {
            SpreadKind::Variance => self.spread.sqrt(),
            SpreadKind::StdDev => self.spread,
        };
        Normal::new(self.mean, sd).expect("validated spread")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetSampler {
    pub floating_fraction: f64,
    pub floating_x: AxisDist,
    pub floating_y: AxisDist,
    pub floating_z: AxisDist,
    pub retinal_x: AxisDist,
    pub retinal_y: AxisDist,
    pub spread_kind: SpreadKind,
    pub max_attempts: u32,
}

impl Default for TargetSampler {
    fn default() -> Self {
        Self {
            floating_fraction: 0.4678,
            floating_x: AxisDist::new(0.60, 3.00),
            floating_y: AxisDist::new(-1.00, 4.71),
            floating_z: AxisDist::new(-9.02, 1.98),
            retinal_x: AxisDist::new(-0.02, 5.03),
            retinal_y: AxisDist::new(0.06, 7.08),
            spread_kind: SpreadKind::Variance,
            max_attempts: 1000,
        }
    }
}

impl TargetSampler {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(0.0..=1.0).contains(&self.floating_fraction) {
            return Err("floating_fraction must lie in [0, 1]");
        }
        let axes = [self.floating_x, self.floating_y, self.floating_z, self.retinal_x, self.retinal_y];
        if axes.iter().any(|a| !(a.spread >= 0.0) || !a.mean.is_finite()) {
            return Err("axis spreads must be non-negative and means finite");
        }
        if self.max_attempts == 0 {
            return Err("max_attempts must be positive");
        }
        Ok(())
    }

    /// Whether `target` is admissible for a scene lit from `light_tip`.
    ///
    /// Besides lying inside the limbus disc, a point hovering
    /// [`APPROACH_HEIGHT_MM`] above the target has to cast its shadow on the
    /// visible retina, so a needle tip approaching it can be seen with its shadow.
    pub fn admissible(target: &TargetSpec, eye: &EyeModel, light_tip: Vec3) -> bool {
        let p = target.position;
        if !eye.in_limbus_disc(project(p, eye)) {
            return false;
        }
        let visible = |q: Vec3| match cast_shadow(light_tip, q, eye) {
            Ok(s) => s.z < 0.0 && eye.in_limbus_disc(project(s, eye)),
            Err(_) => false,
        };
        let above = p + Vec3::new(0.0, 0.0, APPROACH_HEIGHT_MM);
        if above.z >= light_tip.z || !visible(above) {
            return false;
        }
        match target.kind {
            TargetKind::Retinal => true,
            TargetKind::Floating => retina_clearance(p, eye) > 0.0 && visible(p),
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        eye: &EyeModel,
        light_tip: Vec3,
        rng: &mut R,
    ) -> Result<TargetSpec, SamplingError> {
        let floating = Bernoulli::new(self.floating_fraction).expect("validated fraction").sample(rng);
        let k = self.spread_kind;
        for _ in 0..self.max_attempts {
            let candidate = if floating {
                let p = Vec3::new(
                    self.floating_x.normal(k).sample(rng),
                    self.floating_y.normal(k).sample(rng),
                    self.floating_z.normal(k).sample(rng),
                );
                Some(TargetSpec::floating(p))
            } else {
                let x = self.retinal_x.normal(k).sample(rng);
                let y = self.retinal_y.normal(k).sample(rng);
                TargetSpec::retinal_at(x, y, eye)
            };
            if let Some(t) = candidate.filter(|t| Self::admissible(t, eye, light_tip)) {
                return Ok(t);
            }
        }
        Err(SamplingError::SamplingExhausted(self.max_attempts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn light() -> Vec3 {
        Vec3::new(-4.0, -2.3, 6.8)
    }

    #[test]
    fn retinal_only_sampler() {
        let eye = EyeModel::default();
        let s = TargetSampler { floating_fraction: 0.0, ..TargetSampler::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let t = s.sample(&eye, light(), &mut rng).unwrap();
            assert_eq!(t.kind, TargetKind::Retinal);
            assert!((t.position.norm() - 12.0).abs() < 1e-6);
        }
    }

    #[test]
    fn seeded_sequence_is_reproducible() {
        let eye = EyeModel::default();
        let s = TargetSampler::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| s.sample(&eye, light(), &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn exhaustion_is_reported() {
        let eye = EyeModel::default();
        let s = TargetSampler {
            floating_fraction: 1.0,
            floating_z: AxisDist::new(50.0, 0.0),
            max_attempts: 10,
            ..TargetSampler::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(s.sample(&eye, light(), &mut rng), Err(SamplingError::SamplingExhausted(10)));
    }

    #[test]
    fn spread_reading_changes_dispersion() {
        let eye = EyeModel::default();
        let spread = |kind| {
            let s = TargetSampler { floating_fraction: 1.0, spread_kind: kind, ..TargetSampler::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let xs: Vec<f64> = (0..4000).map(|_| s.sample(&eye, light(), &mut rng).unwrap().position.x).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
        };
        // sqrt(3) = 1.73 under the variance reading; 3.0 truncated by the limbus otherwise.
        let sd_var = spread(SpreadKind::Variance);
        let sd_std = spread(SpreadKind::StdDev);
        assert!((sd_var - 3f64.sqrt()).abs() < 0.15, "{sd_var}");
        assert!(sd_std > sd_var + 0.3);
    }

    #[test]
    fn floating_depth_mean_matches_table() {
        let eye = EyeModel::default();
        let light = crate::engine::SimConfig::default().light_state().tip();
        let s = TargetSampler { floating_fraction: 1.0, ..TargetSampler::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mean = (0..n).map(|_| s.sample(&eye, light, &mut rng).unwrap().position.z).sum::<f64>() / n as f64;
        assert!((mean + 9.02).abs() <= 0.15, "{mean}");
    }
}
