//! Per-tick session records, metric summaries and variant comparison reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{Adopter, Event, MappingSource, SessionState, Variant};
use crate::geometry::{angle_between, Pose, Twist};
use crate::scene::Phase;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("log is empty")]
    EmptyLog,
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("no classic baseline in the benchmark results")]
    MissingBaseline,
    #[error("no admc variant to compare against the baseline")]
    NoAdmcVariant,
}

/// One control tick. `gripper` is the pose after the tick's motion;
/// `sim_time_s` is the simulated time at which the tick started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub sim_time_s: f64,
    pub gripper: Pose,
    pub twist: Twist,
    pub mapping_source: MappingSource,
    pub suggestion_epoch: Option<u64>,
    pub suggestion_confidence: Option<f64>,
    pub events: Vec<Event>,
    pub phase: Phase,
}

impl TickRecord {
    /// Build the record for `tick` from the state produced by advancing it.
    pub fn capture(tick: u64, after: &SessionState, events: Vec<Event>, dt: f64) -> Self {
        let exposed = after.exposed_suggestion();
        TickRecord {
            tick,
            sim_time_s: tick as f64 * dt,
            gripper: after.gripper.clone(),
            twist: after.last_twist,
            mapping_source: after.mapping.source,
            suggestion_epoch: exposed.map(|s| s.epoch),
            suggestion_confidence: exposed.map(|s| s.confidence),
            events,
            phase: after.task.phase,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub records: Vec<TickRecord>,
}

impl SessionLog {
    pub fn new() -> Self {
        SessionLog::default()
    }

    pub fn record(&mut self, tick: u64, after: &SessionState, events: Vec<Event>, dt: f64) {
        self.records.push(TickRecord::capture(tick, after, events, dt));
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, TelemetryError> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|source| TelemetryError::Parse { line: i + 1, source })?;
            records.push(rec);
        }
        Ok(SessionLog { records })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub completion_time_s: Option<f64>,
    pub user_switches: u64,
    pub auto_switches: u64,
    pub path_length_m: f64,
    pub angular_path_rad: f64,
    pub idle_time_s: f64,
    pub perspective_changes: u64,
    pub success: bool,
    pub ticks: u64,
}

impl Metrics {
    fn empty() -> Self {
        Metrics {
            completion_time_s: None,
            user_switches: 0,
            auto_switches: 0,
            path_length_m: 0.0,
            angular_path_rad: 0.0,
            idle_time_s: 0.0,
            perspective_changes: 0,
            success: false,
            ticks: 0,
        }
    }
}

/// Running metrics over a stream of records.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    dt: f64,
    prev: Option<Pose>,
    idle_ticks: u64,
    metrics: Metrics,
}

impl MetricsAccumulator {
    pub fn new(dt: f64) -> Self {
        MetricsAccumulator {
            dt,
            prev: None,
            idle_ticks: 0,
            metrics: Metrics::empty(),
        }
    }

    /// Measure path length from `start` rather than from the first record.
    pub fn with_start(dt: f64, start: &Pose) -> Self {
        MetricsAccumulator {
            prev: Some(start.clone()),
            ..MetricsAccumulator::new(dt)
        }
    }

    pub fn push(&mut self, r: &TickRecord) {
        let m = &mut self.metrics;
        if let Some(prev) = &self.prev {
            m.path_length_m += (r.gripper.position - prev.position).norm();
            m.angular_path_rad += angle_between(&prev.orientation, &r.gripper.orientation);
        }
        self.prev = Some(r.gripper.clone());
        if r.twist.is_zero() {
            self.idle_ticks += 1;
        }
        m.ticks += 1;
        m.idle_time_s = self.idle_ticks as f64 * self.dt;
        for e in &r.events {
            match e {
                Event::MappingAdopted { by: Adopter::User, .. } | Event::ModeCycled { .. } => m.user_switches += 1,
                Event::MappingAdopted { by: Adopter::Auto, .. } => m.auto_switches += 1,
                Event::PerspectiveChanged { .. } => m.perspective_changes += 1,
                Event::TaskDone { sim_time_s } => {
                    m.completion_time_s = Some(*sim_time_s);
                    m.success = true;
                }
                _ => {}
            }
        }
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }
}

/// Metrics from a log alone. The pose before the first record is unknown,
/// so path length is measured from the first recorded pose.
pub fn summarize(log: &SessionLog, dt: f64) -> Result<Metrics, TelemetryError> {
    if log.is_empty() {
        return Err(TelemetryError::EmptyLog);
    }
    let mut acc = MetricsAccumulator::new(dt);
    for r in &log.records {
        acc.push(r);
    }
    Ok(acc.metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub runs: usize,
    /// Mean over successful runs; `None` when no run succeeded.
    pub completion_time_s: Option<f64>,
    pub user_switches: f64,
    pub auto_switches: f64,
    pub path_length_m: f64,
    pub success_rate: f64,
}

impl VariantSummary {
    pub fn from_runs(variant: Variant, runs: &[Metrics]) -> Self {
        let n = runs.len().max(1) as f64;
        let done: Vec<f64> = runs.iter().filter_map(|m| m.completion_time_s).collect();
        VariantSummary {
            variant,
            runs: runs.len(),
            completion_time_s: (!done.is_empty()).then(|| done.iter().sum::<f64>() / done.len() as f64),
            user_switches: runs.iter().map(|m| m.user_switches as f64).sum::<f64>() / n,
            auto_switches: runs.iter().map(|m| m.auto_switches as f64).sum::<f64>() / n,
            path_length_m: runs.iter().map(|m| m.path_length_m).sum::<f64>() / n,
            success_rate: runs.iter().filter(|m| m.success).count() as f64 / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ratio {
    pub ratio: f64,
    pub delta: f64,
}

impl Ratio {
    pub fn of(value: f64, baseline: f64) -> Self {
        let ratio = if baseline == 0.0 {
            if value == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            value / baseline
        };
        Ratio {
            ratio,
            delta: value - baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub variant: Variant,
    pub completion_time: Option<Ratio>,
    pub user_switches: Ratio,
    pub auto_switches: Ratio,
    pub path_length: Ratio,
    pub success_rate: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub summaries: Vec<VariantSummary>,
    pub comparisons: Vec<Comparison>,
}

pub const REPORT_CSV_HEADER: &str = "variant,completion_time_s,user_switches,auto_switches,path_length_m,success_rate";

pub fn compare(metrics_by_variant: &BTreeMap<Variant, Vec<Metrics>>) -> Result<Report, ReportError> {
    let classic = metrics_by_variant
        .get(&Variant::Classic)
        .ok_or(ReportError::MissingBaseline)?;
    if !metrics_by_variant.keys().any(|v| *v != Variant::Classic) {
        return Err(ReportError::NoAdmcVariant);
    }
    let base = VariantSummary::from_runs(Variant::Classic, classic);
    let summaries: Vec<VariantSummary> = metrics_by_variant
        .iter()
        .map(|(v, runs)| VariantSummary::from_runs(*v, runs))
        .collect();
    let comparisons = summaries
        .iter()
        .filter(|s| s.variant != Variant::Classic)
        .map(|s| Comparison {
            variant: s.variant,
            completion_time: s
                .completion_time_s
                .zip(base.completion_time_s)
                .map(|(v, b)| Ratio::of(v, b)),
            user_switches: Ratio::of(s.user_switches, base.user_switches),
            auto_switches: Ratio::of(s.auto_switches, base.auto_switches),
            path_length: Ratio::of(s.path_length_m, base.path_length_m),
            success_rate: Ratio::of(s.success_rate, base.success_rate),
        })
        .collect();
    Ok(Report {
        summaries,
        comparisons,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

impl Report {
    pub fn summary(&self, v: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == v)
    }

    pub fn comparison(&self, v: Variant) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.variant == v)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for s in &self.summaries {
            let time = s.completion_time_s.map(|t| t.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.variant, time, s.user_switches, s.auto_switches, s.path_length_m, s.success_rate
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>5} {:>10} {:>9} {:>9} {:>9} {:>8}",
            "variant", "runs", "time_s", "user_sw", "auto_sw", "path_m", "success"
        );
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:<16} {:>5} {:>10} {:>9.2} {:>9.2} {:>9.3} {:>8.2}",
                s.variant.as_str(),
                s.runs,
                opt(s.completion_time_s),
                s.user_switches,
                s.auto_switches,
                s.path_length_m,
                s.success_rate
            );
        }
        out.push('\n');
        let _ = writeln!(out, "relative to classic (ratio / delta):");
        for c in &self.comparisons {
            let _ = writeln!(
                out,
                "  {:<16} time {} / {}  user_switches {:.3} / {:+.2}  path {:.3} / {:+.3}  workload n/a",
                c.variant.as_str(),
                opt(c.completion_time.map(|r| r.ratio)),
                c.completion_time.map_or_else(|| "n/a".to_string(), |r| format!("{:+.2}s", r.delta)),
                c.user_switches.ratio,
                c.user_switches.delta,
                c.path_length.ratio,
                c.path_length.delta,
            );
        }
        out
    }
}
