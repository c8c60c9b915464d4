// SPDX-License-Identifier: Apache-2.0

//! Batch statistics, one row per target kind.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::TargetKind;

use super::episode::{EpisodeRecord, Outcome};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("no episode records to aggregate")]
    EmptyInput,
}

/// Width of the x-y error histogram bins, in mm.
pub const XY_BIN_MM: f64 = 0.1;
/// Number of histogram bins; the last bin also collects everything beyond it.
pub const XY_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo_mm: f64,
    pub hi_mm: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub kind: TargetKind,
    pub episodes: u64,
    pub success: u64,
    pub stuck: u64,
    pub degenerate: u64,
    pub safety_abort: u64,
    /// Episodes whose tip crossed (or tried to cross) the retina.
    pub penetrations: u64,
    /// Means over successful episodes; `None` when there are none.
    pub mean_depth_error_mm: Option<f64>,
    pub mean_abs_depth_error_mm: Option<f64>,
    pub mean_retina_clearance_mm: Option<f64>,
    pub mean_xy_error_mm: Option<f64>,
    pub xy_within_1mm: u64,
    pub xy_histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub episodes: u64,
    pub success: u64,
    pub stuck: u64,
    pub degenerate: u64,
    pub safety_abort: u64,
    pub penetrations: u64,
    pub rows: Vec<KindStats>,
}

impl SummaryStats {
    pub fn row(&self, kind: TargetKind) -> Option<&KindStats> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    pub fn success_rate(&self) -> f64 {
        self.success as f64 / self.episodes as f64
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0u64), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn penetrated(r: &EpisodeRecord) -> bool {
    r.outcome == Outcome::SafetyAbort || r.min_retina_clearance_mm <= 0.0
}

fn kind_stats(kind: TargetKind, records: &[&EpisodeRecord]) -> KindStats {
    let count = |o| records.iter().filter(|r| r.outcome == o).count() as u64;
    let ok: Vec<&&EpisodeRecord> = records.iter().filter(|r| r.outcome == Outcome::Success).collect();
    let mut hist: Vec<HistogramBin> = (0..XY_BINS)
        .map(|i| HistogramBin { lo_mm: i as f64 * XY_BIN_MM, hi_mm: (i + 1) as f64 * XY_BIN_MM, count: 0 })
        .collect();
    for r in &ok {
        let i = ((r.xy_error_mm / XY_BIN_MM) as usize).min(XY_BINS - 1);
        hist[i].count += 1;
    }
    KindStats {
        kind,
        episodes: records.len() as u64,
        success: ok.len() as u64,
        stuck: count(Outcome::Stuck),
        degenerate: count(Outcome::Degenerate),
        safety_abort: count(Outcome::SafetyAbort),
        penetrations: records.iter().filter(|r| penetrated(r)).count() as u64,
        mean_depth_error_mm: mean(ok.iter().map(|r| r.depth_error_mm)),
        mean_abs_depth_error_mm: mean(ok.iter().map(|r| r.depth_error_mm.abs())),
        mean_retina_clearance_mm: mean(ok.iter().map(|r| r.needle_retina_mm)),
        mean_xy_error_mm: mean(ok.iter().map(|r| r.xy_error_mm)),
        xy_within_1mm: ok.iter().filter(|r| r.xy_error_mm <= 1.0).count() as u64,
        xy_histogram: hist,
    }
}

/// Per-kind statistics in record order. Rows appear floating first, then retinal.
pub fn aggregate(records: &[EpisodeRecord]) -> Result<SummaryStats, StatsError> {
    if records.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let rows: Vec<KindStats> = [TargetKind::Floating, TargetKind::Retinal]
        .into_iter()
        .filter_map(|k| {
            let sel: Vec<&EpisodeRecord> = records.iter().filter(|r| r.kind() == k).collect();
            (!sel.is_empty()).then(|| kind_stats(k, &sel))
        })
        .collect();
    let sum = |f: fn(&KindStats) -> u64| rows.iter().map(f).sum();
    Ok(SummaryStats {
        episodes: records.len() as u64,
        success: sum(|r| r.success),
        stuck: sum(|r| r.stuck),
        degenerate: sum(|r| r.degenerate),
        safety_abort: sum(|r| r.safety_abort),
        penetrations: sum(|r| r.penetrations),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::scene::TargetSpec;

    fn record(kind: TargetKind, outcome: Outcome, depth: f64, xy: f64) -> EpisodeRecord {
        EpisodeRecord {
            episode: 0,
            seed: 0,
            target: TargetSpec { kind, position: Vec3::new(0.0, 0.0, -10.0) },
            outcome,
            depth_error_mm: depth,
            xy_error_mm: xy,
            shadow_xy_error_px: None,
            needle_retina_mm: 0.5,
            min_retina_clearance_mm: 0.5,
            step_count: 10,
            light_adjustments: 0,
            step_refinements: 0,
            steps: Vec::new(),
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert_eq!(aggregate(&[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn single_success_mean() {
        let s = aggregate(&[record(TargetKind::Floating, Outcome::Success, 0.01, 0.2)]).unwrap();
        let row = s.row(TargetKind::Floating).unwrap();
        assert!((row.mean_depth_error_mm.unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(s.rows.len(), 1);
        assert_eq!(row.xy_histogram[2].count, 1);
    }

    #[test]
    fn kinds_are_separate_rows() {
        let recs = [
            record(TargetKind::Floating, Outcome::Success, -0.02, 0.1),
            record(TargetKind::Retinal, Outcome::Success, 0.4, 0.3),
            record(TargetKind::Retinal, Outcome::Success, 0.2, 1.5),
            record(TargetKind::Retinal, Outcome::Stuck, 3.0, 3.0),
        ];
        let s = aggregate(&recs).unwrap();
        assert_eq!(s.rows.len(), 2);
        let f = s.row(TargetKind::Floating).unwrap();
        let r = s.row(TargetKind::Retinal).unwrap();
        assert!((f.mean_abs_depth_error_mm.unwrap() - 0.02).abs() < 1e-15);
        assert!((r.mean_depth_error_mm.unwrap() - 0.3).abs() < 1e-15);
        assert_eq!((r.success, r.stuck, r.xy_within_1mm), (2, 1, 1));
        assert_eq!(r.xy_histogram[15].count, 1);
        assert_eq!((s.success, s.stuck, s.penetrations), (3, 1, 0));
    }

    #[test]
    fn safety_abort_counts_as_penetration() {
        let s = aggregate(&[record(TargetKind::Retinal, Outcome::SafetyAbort, 0.0, 0.0)]).unwrap();
        assert_eq!(s.penetrations, 1);
    }
}
