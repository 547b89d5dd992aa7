//! Metric aggregation, CSV tables and the JSON run report.

use std::fmt::Write as _;

use anyhow::{ensure, Result};
use serde::{Deserialize, Serialize};

use tenantsched_core::ppo::EpisodeResult;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> MeanStd {
        if xs.is_empty() {
            return MeanStd { mean: 0.0, std: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanStd { mean, std }
    }

    fn is_finite(&self) -> bool {
        self.mean.is_finite() && self.std.is_finite()
    }
}

/// One table row: a scheduler's metrics over all evaluation seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerRow {
    pub scheduler: String,
    /// Sweep condition (e.g. a load level); absent for plain comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    pub seeds: usize,
    pub avg_delay_ms: MeanStd,
    pub utilization_pct: MeanStd,
    pub jfi: MeanStd,
    /// Total episode reward.
    pub mean_reward: MeanStd,
    pub completed: MeanStd,
}

impl SchedulerRow {
    pub fn from_episodes(scheduler: &str, condition: Option<&str>, episodes: &[EpisodeResult]) -> SchedulerRow {
        let col = |f: fn(&EpisodeResult) -> f64| MeanStd::of(&episodes.iter().map(f).collect::<Vec<_>>());
        SchedulerRow {
            scheduler: scheduler.to_string(),
            condition: condition.map(str::to_string),
            seeds: episodes.len(),
            avg_delay_ms: col(|e| e.metrics.mean_delay_ms),
            utilization_pct: col(|e| 100.0 * e.metrics.utilization_time_avg),
            jfi: col(|e| e.metrics.jfi_final),
            mean_reward: col(|e| e.total_reward),
            completed: col(|e| e.metrics.completed as f64),
        }
    }

    fn columns(&self) -> [MeanStd; 5] {
        [
            self.avg_delay_ms,
            self.utilization_pct,
            self.jfi,
            self.mean_reward,
            self.completed,
        ]
    }
}

const METRIC_COLUMNS: [&str; 5] = ["avg_delay_ms", "utilization_pct", "jfi", "mean_reward", "completed"];

/// Comma-separated table with `_mean`/`_std` columns per metric.
/// With `condition_column`, a second column holds each row's condition.
pub fn rows_csv(rows: &[SchedulerRow], condition_column: Option<&str>) -> String {
    let mut out = String::from("scheduler");
    if let Some(c) = condition_column {
        out.push(',');
        out.push_str(c);
    }
    for m in METRIC_COLUMNS {
        let _ = write!(out, ",{m}_mean,{m}_std");
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.scheduler);
        if condition_column.is_some() {
            out.push(',');
            out.push_str(row.condition.as_deref().unwrap_or(""));
        }
        for c in row.columns() {
            let _ = write!(out, ",{:.6},{:.6}", c.mean, c.std);
        }
        out.push('\n');
    }
    out
}

/// Per-episode table for `eval`.
pub fn episodes_csv(episodes: &[EpisodeResult]) -> String {
    let mut out = String::from("seed,total_reward,steps,avg_delay_ms,utilization_pct,jfi,completed,unfinished\n");
    for (k, e) in episodes.iter().enumerate() {
        let _ = writeln!(
            out,
            "{k},{:.6},{},{:.6},{:.6},{:.6},{},{}",
            e.total_reward,
            e.steps,
            e.metrics.mean_delay_ms,
            100.0 * e.metrics.utilization_time_avg,
            e.metrics.jfi_final,
            e.metrics.completed,
            e.metrics.unfinished
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub updates: usize,
    pub episodes: u64,
    pub final_mean_reward: f64,
    pub final_value_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    /// The only field that varies between identical runs.
    pub wall_clock_s: f64,
    #[serde(default)]
    pub schedulers: Vec<SchedulerRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSummary>,
}

impl RunReport {
    pub fn new(command: &str, config: &RunConfig, wall_clock_s: f64) -> RunReport {
        RunReport {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            seed: config.seed,
            config: config.clone(),
            wall_clock_s,
            schedulers: Vec::new(),
            training: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.schema_version == SCHEMA_VERSION,
            "unsupported report schema version {}",
            self.schema_version
        );
        ensure!(self.wall_clock_s.is_finite() && self.wall_clock_s >= 0.0, "bad wall clock");
        for row in &self.schedulers {
            ensure!(
                row.columns().iter().all(MeanStd::is_finite),
                "non-finite metric for scheduler {}",
                row.scheduler
            );
        }
        if let Some(t) = &self.training {
            ensure!(
                t.final_mean_reward.is_finite() && t.final_value_loss.is_finite(),
                "non-finite training summary"
            );
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
