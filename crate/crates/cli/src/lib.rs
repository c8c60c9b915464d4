// SPDX-License-Identifier: Apache-2.0

//! Command implementations behind the `shadownav` binary.

pub mod config;
pub mod output;
pub mod svg;

use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use shadownav_core::engine::{run_indexed, EpisodeRecord, Scenario};
use shadownav_core::{aggregate, SummaryStats};

use crate::config::RunConfig;
use crate::output::{BatchWriter, FRAMES_DIR, RECORD_FILE, STATS_FILE, SUMMARY_FILE, SUMMARY_HEADER, TRAJECTORY_FILE};
use crate::svg::FrameContext;

/// Episodes run in parallel before their records are written.
const CHUNK: u64 = 256;

/// Runs `episodes` sampled episodes on `jobs` threads and writes the batch artifacts into `out`.
pub fn run_batch(cfg: &RunConfig, episodes: u64, jobs: Option<usize>, out: &Path) -> Result<SummaryStats> {
    anyhow::ensure!(episodes > 0, "episode count must be positive");
    let sim = cfg.sim();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build()?;
    let mut writer = BatchWriter::create(out)?;
    let mut kept = Vec::with_capacity(episodes as usize);
    let mut start = 0;
    while start < episodes {
        let end = (start + CHUNK).min(episodes);
        let chunk: Vec<EpisodeRecord> = pool
            .install(|| (start..end).into_par_iter().map(|i| run_indexed(&sim, cfg.seed, i)).collect::<Result<_, _>>())
            .context("sampling targets")?;
        for rec in chunk {
            writer.append(&rec)?;
            kept.push(EpisodeRecord { steps: Vec::new(), ..rec });
        }
        start = end;
    }
    writer.finish()?;
    let stats = aggregate(&kept)?;
    output::write_stats(&out.join(STATS_FILE), &stats)?;
    Ok(stats)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
}

/// Runs one scenario and writes its record, summary row, trajectory and optionally SVG frames.
pub fn run_one(cfg: &RunConfig, scenario: &Scenario, frames: bool, out: &Path) -> Result<EpisodeRecord> {
    let base = cfg.sim();
    let rec = scenario.run(&base).context("invalid scenario")?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    output::write_record(&out.join(RECORD_FILE), &rec)?;
    output::write_trajectory(&out.join(TRAJECTORY_FILE), &rec)?;
    let mut summary = csv::Writer::from_path(out.join(SUMMARY_FILE))?;
    summary.write_record(SUMMARY_HEADER)?;
    summary.write_record(output::summary_row(&rec))?;
    summary.flush()?;
    if frames {
        let sim = scenario.config(&base);
        let ctx = FrameContext {
            eye: sim.eye,
            needle_trocar: sim.needle_state().trocar,
            light_trocar: sim.light_state().trocar,
        };
        svg::write_frames(&out.join(FRAMES_DIR), &ctx, &rec)?;
    }
    Ok(rec)
}

pub fn export_trajectory(record: &Path, episode: Option<u64>, out: &Path) -> Result<usize> {
    let rec = output::read_record(record, episode)?;
    output::write_trajectory(out, &rec)?;
    Ok(rec.steps.len())
}
