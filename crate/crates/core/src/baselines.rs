//! Comparison policies: non-elastic FIFO at one frequency, elastic
//! throughput-greedy without a power limit, and per-job energy-optimal
//! configurations without elasticity.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterSpec;
use crate::error::{Error, Result};
use crate::job::JobState;
use crate::placement::round_worker_count;
use crate::scheduler::{
    next_gpu_step, non_dominated, Assignment, AllocationPlan, Decision, DecisionLog, DecisionPhase,
    ParetoPoint, SchedContext,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Policy {
    EnergyAware,
    FixedFifo { uniform_frequency: f64 },
    ElasticMaxTpt { uniform_frequency: f64 },
    ParetoPerJob,
}

impl Policy {
    pub const NAMES: [&'static str; 4] = ["energy_aware", "fixed_fifo", "elastic_max_tpt", "pareto_per_job"];

    /// Policy by name; fixed-frequency policies default to the top frequency.
    pub fn parse(name: &str, frequency: Option<f64>, cluster: &ClusterSpec) -> Result<Self> {
        let f = frequency.unwrap_or_else(|| cluster.f_max());
        let p = match name {
            "energy_aware" => Policy::EnergyAware,
            "fixed_fifo" => Policy::FixedFifo { uniform_frequency: f },
            "elastic_max_tpt" => Policy::ElasticMaxTpt { uniform_frequency: f },
            "pareto_per_job" => Policy::ParetoPerJob,
            other => {
                return Err(Error::input(format!(
                    "unknown policy {other:?}; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        };
        if frequency.is_some() && p.uniform_frequency().is_none() {
            return Err(Error::input(format!("policy {name} does not take a fixed frequency")));
        }
        p.validate(cluster)?;
        Ok(p)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::EnergyAware => "energy_aware",
            Policy::FixedFifo { .. } => "fixed_fifo",
            Policy::ElasticMaxTpt { .. } => "elastic_max_tpt",
            Policy::ParetoPerJob => "pareto_per_job",
        }
    }

    pub fn uniform_frequency(&self) -> Option<f64> {
        match *self {
            Policy::FixedFifo { uniform_frequency } | Policy::ElasticMaxTpt { uniform_frequency } => {
                Some(uniform_frequency)
            }
            _ => None,
        }
    }

    pub fn validate(&self, cluster: &ClusterSpec) -> Result<()> {
        match self.uniform_frequency() {
            Some(f) if !cluster.supported_frequencies.contains(&f) => {
                Err(Error::input(format!("frequency {f} MHz is not in the supported set")))
            }
            _ => Ok(()),
        }
    }

    /// Whether jobs are profiled and modelled before they run.
    pub fn uses_models(&self) -> bool {
        !matches!(self, Policy::FixedFifo { .. })
    }

    /// Whether running jobs are re-planned at every scheduling event.
    pub fn is_elastic(&self) -> bool {
        matches!(self, Policy::EnergyAware | Policy::ElasticMaxTpt { .. })
    }

    /// Whether the cluster power limit applies.
    pub fn power_limited(&self) -> bool {
        matches!(self, Policy::EnergyAware)
    }
}

/// GPUs a non-elastic job runs on: its request capped at the cluster size,
/// rounded down to a power of two, halved until the batch splits validly.
pub fn fifo_gpu_count(job: &JobState, total_gpus: u32) -> Result<u32> {
    let mut n = round_worker_count(job.spec.requested_gpus.min(total_gpus).max(1))?;
    while n > 1 && !job.accepts_n(n, total_gpus) {
        n /= 2;
    }
    if !job.accepts_n(n, total_gpus) {
        return Err(Error::input(format!("job {} cannot run on one GPU", job.id())));
    }
    Ok(n)
}

/// FIFO admission: the longest prefix of `queue` (already in FIFO order)
/// whose GPU counts fit in `free_gpus`, each at `frequency`.
pub fn fixed_fifo(queue: &[&JobState], free_gpus: u32, total_gpus: u32, frequency: f64) -> Result<Vec<(usize, u32, f64)>> {
    let mut free = free_gpus;
    let mut out = Vec::new();
    for (k, job) in queue.iter().enumerate() {
        let n = fifo_gpu_count(job, total_gpus)?;
        if n > free {
            break;
        }
        free -= n;
        out.push((k, n, frequency));
    }
    Ok(out)
}

/// The most energy-efficient point of the job's frontier at its requested
/// (rounded) GPU count.
pub fn pareto_per_job(job: &JobState, ctx: &SchedContext) -> Result<ParetoPoint> {
    let n = fifo_gpu_count(job, ctx.total_gpus)?;
    let model = job.model()?;
    let mut points = Vec::with_capacity(ctx.frequencies.len());
    for &f in ctx.frequencies {
        let config = job.config(n, f, ctx.gpus_per_node)?;
        let p = model.predict(&config)?;
        points.push(ParetoPoint { config, throughput: 1.0 / p.step_time.total, energy_per_iter: p.energy_per_iter });
    }
    let front = non_dominated(points);
    let ee = |p: &ParetoPoint| p.throughput / p.energy_per_iter;
    let mut best: Option<ParetoPoint> = None;
    for p in front {
        let better = match &best {
            None => true,
            Some(b) => ee(&p) > ee(b) || (ee(&p) == ee(b) && p.config.freq_mhz < b.config.freq_mhz),
        };
        if better {
            best = Some(p);
        }
    }
    best.ok_or_else(|| Error::state("empty frequency set"))
}

struct Entry {
    priority: f64,
    submit: f64,
    idx: usize,
    id: String,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.submit.total_cmp(&self.submit))
            .then_with(|| other.id.cmp(&self.id))
    }
}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for Entry {}

/// How the throughput gain of a doubling is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WorkDivisor {
    /// Remaining iterations summed over the jobs being planned.
    #[default]
    Cluster,
    /// The job's own remaining iterations (shortest-remaining-first flavour).
    Job,
}

/// Throughput gain (iterations/s) of the next doubling over `work`.
fn tpt_priority(job: &JobState, n: u32, f: f64, work: f64, ctx: &SchedContext) -> Result<Option<f64>> {
    let next = next_gpu_step(n);
    if !job.accepts_n(next, ctx.total_gpus) {
        return Ok(None);
    }
    let model = job.model()?;
    let tpt = |k: u32| -> Result<f64> {
        if k == 0 {
            return Ok(0.0);
        }
        Ok(1.0 / model.predict(&job.config(k, f, ctx.gpus_per_node)?)?.step_time.total)
    };
    let gain = tpt(next)? - tpt(n)?;
    Ok(Some(gain / work.max(1.0)))
}

/// Elastic greedy allocation by marginal throughput at one frequency, no
/// power limit.
pub fn elastic_max_tpt(
    jobs: &[JobState],
    ctx: &SchedContext,
    free_gpus: u32,
    frequency: f64,
    time: f64,
    log: &mut DecisionLog,
) -> Result<AllocationPlan> {
    elastic_max_tpt_with(jobs, ctx, free_gpus, frequency, WorkDivisor::Cluster, time, log)
}

#[allow(clippy::too_many_arguments)]
pub fn elastic_max_tpt_with(
    jobs: &[JobState],
    ctx: &SchedContext,
    free_gpus: u32,
    frequency: f64,
    divisor: WorkDivisor,
    time: f64,
    log: &mut DecisionLog,
) -> Result<AllocationPlan> {
    let cluster_work: f64 = jobs.iter().map(JobState::remaining_iters).sum();
    let work = |job: &JobState| match divisor {
        WorkDivisor::Cluster => cluster_work,
        WorkDivisor::Job => job.remaining_iters(),
    };
    let mut plan = AllocationPlan { assignments: Vec::with_capacity(jobs.len()), reserved_power: 0.0, projected_total_power: 0.0 };
    let mut heap = BinaryHeap::new();
    for (idx, job) in jobs.iter().enumerate() {
        plan.assignments.push(Assignment { job_id: job.id().to_string(), n: 0, f: frequency, power: 0.0, needs_profiling: false });
        if let Some(p) = tpt_priority(job, 0, frequency, work(job), ctx)? {
            heap.push(Entry { priority: p, submit: job.spec.submit_time, idx, id: job.id().to_string() });
        }
    }
    let mut free = free_gpus;
    while let Some(top) = heap.pop() {
        if free == 0 || !(top.priority > 0.0) {
            break;
        }
        let job = &jobs[top.idx];
        let n = plan.assignments[top.idx].n;
        let next = next_gpu_step(n);
        if next - n > free {
            continue;
        }
        free -= next - n;
        let power = job.model()?.predict(&job.config(next, frequency, ctx.gpus_per_node)?)?.power;
        let a = &mut plan.assignments[top.idx];
        plan.projected_total_power += power - a.power;
        a.n = next;
        a.power = power;
        log.push(Decision {
            time_s: time,
            job_id: job.id().to_string(),
            phase: DecisionPhase::Gpu,
            old_n: n,
            new_n: next,
            old_f_mhz: frequency,
            new_f_mhz: frequency,
            projected_power_w: plan.projected_total_power,
        });
        if let Some(p) = tpt_priority(job, next, frequency, work(job), ctx)? {
            heap.push(Entry { priority: p, ..top });
        }
    }
    for (a, job) in plan.assignments.iter_mut().zip(jobs) {
        a.needs_profiling = a.n > 0 && !job.profiled_ns.contains(&a.n);
    }
    Ok(plan)
}
