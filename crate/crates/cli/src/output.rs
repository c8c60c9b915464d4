// SPDX-License-Identifier: Apache-2.0

//! Batch and trajectory artifacts.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use shadownav_core::engine::{trajectory_table, EpisodeRecord, TRAJECTORY_HEADER};
use shadownav_core::SummaryStats;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const STATS_FILE: &str = "stats.json";
pub const RECORD_FILE: &str = "record.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const FRAMES_DIR: &str = "frames";

pub const SUMMARY_HEADER: [&str; 7] =
    ["episode", "kind", "outcome", "depth_error_mm", "xy_error_mm", "retina_clearance_mm", "steps"];

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Writes batch artifacts in episode order as records arrive.
pub struct BatchWriter {
    records: BufWriter<File>,
    summary: csv::Writer<BufWriter<File>>,
}

impl BatchWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut summary = csv::Writer::from_writer(create(&dir.join(SUMMARY_FILE))?);
        summary.write_record(SUMMARY_HEADER)?;
        Ok(Self { records: create(&dir.join(RECORDS_FILE))?, summary })
    }

    pub fn append(&mut self, rec: &EpisodeRecord) -> Result<()> {
        serde_json::to_writer(&mut self.records, rec)?;
        self.records.write_all(b"\n")?;
        self.summary.write_record(summary_row(rec))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.records.flush()?;
        self.summary.flush()?;
        Ok(())
    }
}

pub fn summary_row(rec: &EpisodeRecord) -> [String; 7] {
    [
        rec.episode.to_string(),
        rec.kind().as_str().to_string(),
        rec.outcome.as_str().to_string(),
        rec.depth_error_mm.to_string(),
        rec.xy_error_mm.to_string(),
        rec.needle_retina_mm.to_string(),
        rec.step_count.to_string(),
    ]
}

pub fn write_stats(path: &Path, stats: &SummaryStats) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, stats)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_record(path: &Path, rec: &EpisodeRecord) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, rec)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads one record from a JSON file, or record `episode` from a JSONL batch log.
pub fn read_record(path: &Path, episode: Option<u64>) -> Result<EpisodeRecord> {
    let file = File::open(path).with_context(|| format!("opening record {}", path.display()))?;
    let mut found = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EpisodeRecord =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: invalid record", path.display(), i + 1))?;
        match episode {
            Some(e) if rec.episode == e => return Ok(rec),
            Some(_) => {}
            None => found.push(rec),
        }
    }
    match (episode, found.len()) {
        (Some(e), _) => bail!("episode {e} not found in {}", path.display()),
        (None, 1) => Ok(found.pop().unwrap()),
        (None, 0) => bail!("no record in {}", path.display()),
        (None, n) => bail!("{} holds {n} records; choose one with --episode", path.display()),
    }
}

pub fn write_trajectory(path: &Path, rec: &EpisodeRecord) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(TRAJECTORY_HEADER)?;
    for row in trajectory_table(rec) {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    Ok(())
}
