// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use shadownav_cli::config::RunConfig;
use shadownav_core::{Outcome, TargetKind};

/// Shadow-guided needle navigation simulator.
///
/// Every config key can be overridden with an environment variable:
/// SHADOWNAV_ followed by the upper-cased key path joined with `__`,
/// for example SHADOWNAV_THRESHOLDS__SIGMA_APP=10.
#[derive(Parser)]
#[command(name = "shadownav", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run sampled episodes and write records, a summary table and statistics.
    RunBatch {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: u64,
        /// Worker threads; defaults to one per core.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: Option<u64>,
        /// Output directory; defaults to the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one scenario file, optionally rendering a frame per step.
    RunOne {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "on")]
        frames: Switch,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the per-step depth table of a record.
    ExportTrajectory {
        #[arg(long)]
        record: PathBuf,
        /// Episode to pick from a multi-record JSONL file.
        #[arg(long)]
        episode: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(config: Option<PathBuf>) -> Result<RunConfig> {
    RunConfig::load(config.as_deref(), std::env::vars())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::RunBatch { config, episodes, jobs, out } => {
            let cfg = load(config)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let stats = shadownav_cli::run_batch(&cfg, episodes, jobs.map(|j| j as usize), &out)?;
            println!(
                "episodes {} success {} stuck {} degenerate {} safety_abort {} penetrations {}",
                stats.episodes, stats.success, stats.stuck, stats.degenerate, stats.safety_abort, stats.penetrations
            );
            for kind in [TargetKind::Floating, TargetKind::Retinal] {
                if let Some(r) = stats.row(kind) {
                    let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
                    println!(
                        "{:<8} n {:>5} success {:>5} mean_depth_error_mm {} mean_retina_clearance_mm {} mean_xy_error_mm {}",
                        kind.as_str(),
                        r.episodes,
                        r.success,
                        f(r.mean_depth_error_mm),
                        f(r.mean_retina_clearance_mm),
                        f(r.mean_xy_error_mm)
                    );
                }
            }
            Ok(if stats.penetrations == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::RunOne { config, scenario, frames, out } => {
            let cfg = load(config)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let sc = shadownav_cli::load_scenario(&scenario)?;
            let rec = shadownav_cli::run_one(&cfg, &sc, frames == Switch::On, &out)?;
            println!(
                "outcome {} steps {} depth_error_mm {:.4} xy_error_mm {:.4} light_adjustments {}",
                rec.outcome.as_str(),
                rec.step_count,
                rec.depth_error_mm,
                rec.xy_error_mm,
                rec.light_adjustments
            );
            let penetrated = rec.outcome == Outcome::SafetyAbort || rec.min_retina_clearance_mm <= 0.0;
            Ok(if !penetrated { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::ExportTrajectory { record, episode, out } => {
            let rows = shadownav_cli::export_trajectory(&record, episode, &out)?;
            println!("{rows} rows written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
