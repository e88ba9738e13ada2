//! Simulation outputs and their exports.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::scheduler::DecisionLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Completion,
    MigrationDone,
    Scaling,
    Arrival,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchedulingEvent {
    pub time_s: f64,
    pub kind: EventKind,
    pub job_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobOutcome {
    pub job_id: String,
    pub model: String,
    pub submit_time_s: f64,
    pub finish_time_s: f64,
    pub jct_s: f64,
    /// Includes pre-run and profiling windows.
    pub energy_j: f64,
}

/// Cluster state over `[time_s, next point's time_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub time_s: f64,
    pub power_w: f64,
    pub gpus_allocated: u32,
}

/// Job power actually drawn versus what the scheduler planned, per interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerCheck {
    pub time_s: f64,
    pub duration_s: f64,
    pub oracle_job_power_w: f64,
    pub planned_job_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub policy: String,
    pub total_gpus: u32,
    /// Set when the policy honours the cluster power limit.
    pub power_limit_w: Option<f64>,
    /// In trace order.
    pub jobs: Vec<JobOutcome>,
    pub avg_jct: f64,
    pub total_energy: f64,
    pub idle_energy: f64,
    /// One point per inter-event interval; the last point closes the timeline.
    pub series: Vec<SeriesPoint>,
    pub power_checks: Vec<PowerCheck>,
    pub events: Vec<SchedulingEvent>,
    pub decisions: DecisionLog,
    pub migrations: u32,
    /// Node-map JSON documents, one per scheduling event, when requested.
    pub snapshots: Vec<String>,
}

impl Metrics {
    pub fn power_series(&self) -> Vec<(f64, f64)> {
        self.series.iter().map(|p| (p.time_s, p.power_w)).collect()
    }

    pub fn allocation_series(&self) -> Vec<(f64, u32)> {
        self.series.iter().map(|p| (p.time_s, p.gpus_allocated)).collect()
    }

    /// Step integral of the power series.
    pub fn power_integral(&self) -> f64 {
        series_integral(&self.series)
    }

    pub fn write_series_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "power_w", "gpus_allocated"])?;
        for p in &self.series {
            w.write_record([p.time_s.to_string(), p.power_w.to_string(), p.gpus_allocated.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn series_integral(series: &[SeriesPoint]) -> f64 {
    let mut total = 0.0;
    for w in series.windows(2) {
        total += w[0].power_w * (w[1].time_s - w[0].time_s);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub policy: String,
    pub num_jobs: usize,
    pub avg_jct_s: f64,
    pub total_energy_j: f64,
    pub idle_energy_j: f64,
    pub peak_power_w: f64,
    /// Peak of the summed job power, the quantity the power limit bounds.
    pub peak_job_power_w: f64,
    pub mean_gpu_utilization: f64,
    pub makespan_s: f64,
    pub migrations: u32,
    pub power_limit_w: Option<f64>,
}

pub fn metrics_summary(m: &Metrics) -> Summary {
    let peak_power_w = m.series.iter().map(|p| p.power_w).fold(0.0, f64::max);
    let peak_job_power_w = m.power_checks.iter().map(|p| p.oracle_job_power_w).fold(0.0, f64::max);
    let (start, end) = match (m.series.first(), m.series.last()) {
        (Some(a), Some(b)) => (a.time_s, b.time_s),
        _ => (0.0, 0.0),
    };
    let makespan = end - start;
    let mut gpu_seconds = 0.0;
    for w in m.series.windows(2) {
        gpu_seconds += w[0].gpus_allocated as f64 * (w[1].time_s - w[0].time_s);
    }
    let mean_gpu_utilization = if makespan > 0.0 && m.total_gpus > 0 {
        gpu_seconds / (makespan * m.total_gpus as f64)
    } else {
        0.0
    };
    Summary {
        policy: m.policy.clone(),
        num_jobs: m.jobs.len(),
        avg_jct_s: m.avg_jct,
        total_energy_j: m.total_energy,
        idle_energy_j: m.idle_energy,
        peak_power_w,
        peak_job_power_w,
        mean_gpu_utilization,
        makespan_s: makespan,
        migrations: m.migrations,
        power_limit_w: m.power_limit_w,
    }
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    summary: Summary,
    jobs: &'a [JobOutcome],
}

/// Summary plus per-job outcomes, pretty-printed.
pub fn summary_json(m: &Metrics) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SummaryDoc { summary: metrics_summary(m), jobs: &m.jobs })?)
}
