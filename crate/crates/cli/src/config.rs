// SPDX-License-Identifier: Apache-2.0

//! Run configuration: the simulator settings plus seed and output location.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use shadownav_core::engine::{CalibrationSetup, EpisodeLimits, LightSetup, NeedleSetup};
use shadownav_core::{EyeModel, ObserveOptions, SimConfig, StepSizes, TargetSampler, Thresholds};

/// Prefix of environment variables that override config keys.
/// Nested keys are joined with `__`, e.g. `SHADOWNAV_THRESHOLDS__SIGMA_APP=10`.
pub const ENV_PREFIX: &str = "SHADOWNAV_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub eye: EyeModel,
    pub needle: NeedleSetup,
    pub light: LightSetup,
    pub thresholds: Thresholds,
    pub steps: StepSizes,
    /// Feature extraction, including `noise_sigma_px`.
    pub observe: ObserveOptions,
    pub calibration: CalibrationSetup,
    pub limits: EpisodeLimits,
    /// Target distribution; `spread_kind` selects the variance or std-dev reading.
    pub sampler: TargetSampler,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_sim(SimConfig::default(), 42, PathBuf::from("out"))
    }
}

impl RunConfig {
    pub fn from_sim(sim: SimConfig, seed: u64, output_dir: PathBuf) -> Self {
        Self {
            eye: sim.eye,
            needle: sim.needle,
            light: sim.light,
            thresholds: sim.thresholds,
            steps: sim.steps,
            observe: sim.observe,
            calibration: sim.calibration,
            limits: sim.limits,
            sampler: sim.sampler,
            seed,
            output_dir,
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            eye: self.eye,
            needle: self.needle,
            light: self.light,
            thresholds: self.thresholds,
            steps: self.steps,
            observe: self.observe,
            calibration: self.calibration,
            limits: self.limits,
            sampler: self.sampler,
        }
    }

    /// Parses a JSON document. Errors carry the line and column.
    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads `path` (or the defaults when `None`), applies environment overrides and validates.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::parse(&text).map_err(|e| anyhow::anyhow!("{}:{}:{}: {e}", p.display(), e.line(), e.column()))?
            }
            None => Self::default(),
        };
        let cfg = base.with_overrides(env)?;
        cfg.sim().validate().map_err(anyhow::Error::msg)?;
        Ok(cfg)
    }

    /// Applies `SHADOWNAV_*` variables from `env`. Values are read as JSON, falling back to a string.
    pub fn with_overrides(&self, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        let mut vars: Vec<_> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        if vars.is_empty() {
            return Ok(self.clone());
        }
        vars.sort();
        for (key, raw) in vars {
            let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
            let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw.clone()));
            set_path(&mut doc, &path, value).with_context(|| format!("environment override {key}"))?;
        }
        serde_json::from_value(doc).context("environment overrides")
    }
}

fn set_path(doc: &mut Value, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().context("empty key")?;
    let mut node = doc;
    for seg in parents {
        node = match node.get_mut(seg.as_str()) {
            Some(n) if n.is_object() => n,
            _ => bail!("unknown config key {}", path.join(".")),
        };
    }
    match node.as_object_mut() {
        Some(map) if map.contains_key(last.as_str()) => {
            map.insert(last.clone(), value);
            Ok(())
        }
        _ => bail!("unknown config key {}", path.join(".")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_are_the_published_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.thresholds.sigma_close, 100.0);
        assert_eq!(c.thresholds.sigma_app, 15.0);
        assert_eq!(c.thresholds.sigma_align_ang, 3.0);
        assert_eq!(c.thresholds.sigma_align_dis, 2.0);
        assert_eq!((c.steps.delta_v_deg, c.steps.delta_h_deg, c.steps.delta_r_mm), (0.2, 0.2, 0.167));
        assert_eq!((c.eye.radius_mm, c.eye.limbus_radius_mm, c.eye.image_size_px), (12.0, 6.0, 1024.0));
    }

    #[test]
    fn overrides_reach_nested_and_top_level_keys() {
        let c = RunConfig::default()
            .with_overrides(env(&[
                ("SHADOWNAV_THRESHOLDS__SIGMA_APP", "9.5"),
                ("SHADOWNAV_SEED", "7"),
                ("SHADOWNAV_OUTPUT_DIR", "elsewhere"),
                ("SHADOWNAV_SAMPLER__SPREAD_KIND", "std_dev"),
                ("PATH", "/bin"),
            ]))
            .unwrap();
        assert_eq!(c.thresholds.sigma_app, 9.5);
        assert_eq!(c.seed, 7);
        assert_eq!(c.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(c.sampler.spread_kind, shadownav_core::engine::SpreadKind::StdDev);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::default().with_overrides(env(&[("SHADOWNAV_THRESHOLDS__SIGMA_NOPE", "1")])).is_err());
        assert!(RunConfig::default().with_overrides(env(&[("SHADOWNAV_BOGUS", "1")])).is_err());
        let err = RunConfig::parse("{\n  \"seed\": 1,\n  \"bogus\": 2\n}").unwrap_err();
        assert_eq!(err.line(), 3);
        assert!(RunConfig::parse(r#"{"thresholds": {"sigma_app": 1, "extra": 0}}"#).is_err());
    }

    #[test]
    fn badly_typed_override_fails() {
        assert!(RunConfig::default().with_overrides(env(&[("SHADOWNAV_SEED", "many")])).is_err());
    }

    #[test]
    fn partial_documents_fill_in_defaults() {
        let c = RunConfig::parse(r#"{"limits": {"max_steps": 10}}"#).unwrap();
        assert_eq!(c.limits.max_steps, 10);
        assert_eq!(c.limits.stuck_window, EpisodeLimits::default().stuck_window);
        assert_eq!(c.thresholds, Thresholds::default());
    }
}
