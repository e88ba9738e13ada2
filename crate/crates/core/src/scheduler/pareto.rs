use serde::Serialize;

use super::SchedContext;
use crate::error::Result;
use crate::job::JobState;
use crate::perf_model::Config;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub config: Config,
    /// Iterations per second.
    pub throughput: f64,
    pub energy_per_iter: f64,
}

/// Points not dominated in (higher throughput, lower energy per iteration),
/// ordered by decreasing throughput. Exact duplicates are all kept.
pub fn non_dominated(mut points: Vec<ParetoPoint>) -> Vec<ParetoPoint> {
    points.sort_by(|a, b| {
        b.throughput
            .total_cmp(&a.throughput)
            .then(a.energy_per_iter.total_cmp(&b.energy_per_iter))
            .then(a.config.n.cmp(&b.config.n))
            .then(a.config.freq_mhz.total_cmp(&b.config.freq_mhz))
    });
    let mut out = Vec::new();
    // lowest energy so far, and the throughput of the first point reaching it
    let mut best: Option<(f64, f64)> = None;
    for p in points {
        let dominated = best.is_some_and(|(e, t)| {
            e < p.energy_per_iter || (e == p.energy_per_iter && t > p.throughput)
        });
        if !dominated {
            if best.is_none_or(|(e, _)| p.energy_per_iter < e) {
                best = Some((p.energy_per_iter, p.throughput));
            }
            out.push(p);
        }
    }
    out
}

/// Pareto-optimal configurations over every valid power-of-two GPU count and
/// supported frequency.
pub fn pareto_frontier(job: &JobState, ctx: &SchedContext) -> Result<Vec<ParetoPoint>> {
    let model = job.model()?;
    let mut points = Vec::new();
    let mut n = 1;
    while n <= ctx.total_gpus {
        if job.accepts_n(n, ctx.total_gpus) {
            for &f in ctx.frequencies {
                let config = job.config(n, f, ctx.gpus_per_node)?;
                let p = model.predict(&config)?;
                points.push(ParetoPoint {
                    config,
                    throughput: 1.0 / p.step_time.total,
                    energy_per_iter: p.energy_per_iter,
                });
            }
        }
        n *= 2;
    }
    Ok(non_dominated(points))
}
