//! Energy-aware allocation.
//!
//! GPU counts are handed out first by doubling the job with the largest
//! marginal return (relative JCT reduction over relative energy increase),
//! then frequencies are raised one supported step at a time by the same rule.
//! Every step is checked against the power limit before it is committed.

mod log;
mod pareto;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::cluster::{ClusterSpec, PowerBudget};
use crate::error::{Error, Result};
use crate::job::JobState;
use crate::perf_model::Config;

pub use log::{Decision, DecisionLog, DecisionPhase};
pub use pareto::{non_dominated, pareto_frontier, ParetoPoint};

/// Cluster facts the scheduler needs.
#[derive(Debug, Clone, Copy)]
pub struct SchedContext<'a> {
    /// Ascending, MHz.
    pub frequencies: &'a [f64],
    pub gpus_per_node: u32,
    pub total_gpus: u32,
    pub budget: PowerBudget,
}

impl<'a> SchedContext<'a> {
    pub fn new(spec: &'a ClusterSpec) -> Self {
        SchedContext {
            frequencies: &spec.supported_frequencies,
            gpus_per_node: spec.gpus_per_node,
            total_gpus: spec.total_gpus(),
            budget: spec.budget(),
        }
    }

    pub fn with_budget(self, budget: PowerBudget) -> Self {
        SchedContext { budget, ..self }
    }

    pub fn f_max(&self) -> f64 {
        *self.frequencies.last().expect("non-empty frequency set")
    }
}

/// Predicted cost of finishing a job's remaining iterations at one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub jct: f64,
    pub energy: f64,
    /// Job power over all of its GPUs, watts.
    pub power: f64,
}

pub fn estimate(job: &JobState, n: u32, f: f64, ctx: &SchedContext) -> Result<Estimate> {
    let p = job.model()?.predict(&job.config(n, f, ctx.gpus_per_node)?)?;
    let rem = job.remaining_iters();
    Ok(Estimate { jct: rem * p.step_time.total, energy: rem * p.energy_per_iter, power: p.power })
}

/// `iters / (jct * energy)`: throughput per joule of a job of `iters` iterations.
pub fn efficiency(iters: f64, jct: f64, energy: f64) -> f64 {
    iters / (jct * energy)
}

/// Energy efficiency of running the whole job at `config`.
pub fn energy_efficiency(job: &JobState, config: &Config) -> Result<f64> {
    let p = job.model()?.predict(config)?;
    let iters = job.spec.total_iters as f64;
    Ok(efficiency(iters, iters * p.step_time.total, iters * p.energy_per_iter))
}

/// Supported frequency maximising energy efficiency at `n` GPUs; ties go to
/// the lower frequency.
pub fn most_efficient_frequency(job: &JobState, n: u32, ctx: &SchedContext) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &f in ctx.frequencies {
        let ee = energy_efficiency(job, &job.config(n, f, ctx.gpus_per_node)?)?;
        if best.is_none_or(|(_, b)| ee > b) {
            best = Some((f, ee));
        }
    }
    best.map(|(f, _)| f).ok_or_else(|| Error::input("empty frequency set"))
}

/// Denominators of the marginal returns: remaining JCT and energy summed over
/// unfinished jobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterTotals {
    pub jct: f64,
    pub energy: f64,
}

/// Totals under the jobs' current configuration; queued jobs count at one
/// GPU and their most efficient frequency.
pub fn cluster_totals(jobs: &[JobState], ctx: &SchedContext) -> Result<ClusterTotals> {
    let mut t = ClusterTotals { jct: 0.0, energy: 0.0 };
    for job in jobs.iter().filter(|j| j.remaining_iters() > 0.0) {
        let e = if job.n > 0 && job.accepts_n(job.n, ctx.total_gpus) {
            estimate(job, job.n, job.f, ctx)?
        } else {
            estimate(job, 1, most_efficient_frequency(job, 1, ctx)?, ctx)?
        };
        t.jct += e.jct;
        t.energy += e.energy;
    }
    Ok(t)
}

/// Relative JCT reduction over relative energy increase of moving from
/// `before` to `after`; `before = None` is a queued job. A step that saves
/// time without costing energy scores `+inf`; one that saves neither scores 0.
pub fn marginal_return(before: Option<&Estimate>, after: &Estimate, totals: &ClusterTotals) -> f64 {
    let (gain, cost) = match before {
        Some(b) => (b.jct - after.jct, after.energy - b.energy),
        None => (after.jct, after.energy),
    };
    if cost <= 0.0 {
        return if gain > 0.0 { f64::INFINITY } else { 0.0 };
    }
    let r = (gain / totals.jct) / (cost / totals.energy);
    if r.is_nan() {
        0.0
    } else {
        r
    }
}

/// Next GPU count on the doubling ladder.
pub fn next_gpu_step(n: u32) -> u32 {
    if n == 0 {
        1
    } else {
        2 * n
    }
}

/// Next supported frequency strictly above `f`.
pub fn next_frequency(f: f64, ctx: &SchedContext) -> Option<f64> {
    ctx.frequencies.iter().copied().find(|&g| g > f)
}

/// GPU marginal return of growing `job` from `n` to its next step at
/// frequency `f`; `None` when the next step is not a valid GPU count.
pub fn priority_g_at(
    job: &JobState,
    n: u32,
    f: f64,
    totals: &ClusterTotals,
    ctx: &SchedContext,
) -> Result<Option<f64>> {
    let next = next_gpu_step(n);
    if !job.accepts_n(next, ctx.total_gpus) {
        return Ok(None);
    }
    let before = if n == 0 { None } else { Some(estimate(job, n, f, ctx)?) };
    let after = estimate(job, next, f, ctx)?;
    Ok(Some(marginal_return(before.as_ref(), &after, totals)))
}

pub fn priority_g(job: &JobState, totals: &ClusterTotals, ctx: &SchedContext) -> Result<Option<f64>> {
    priority_g_at(job, job.n, job.f, totals, ctx)
}

/// Frequency marginal return of raising `job` by one supported step; `None`
/// at the top frequency or with no GPUs.
pub fn priority_f_at(
    job: &JobState,
    n: u32,
    f: f64,
    totals: &ClusterTotals,
    ctx: &SchedContext,
) -> Result<Option<f64>> {
    let Some(next) = next_frequency(f, ctx).filter(|_| n > 0) else {
        return Ok(None);
    };
    let before = estimate(job, n, f, ctx)?;
    let after = estimate(job, n, next, ctx)?;
    Ok(Some(marginal_return(Some(&before), &after, totals)))
}

pub fn priority_f(job: &JobState, totals: &ClusterTotals, ctx: &SchedContext) -> Result<Option<f64>> {
    priority_f_at(job, job.n, job.f, totals, ctx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub job_id: String,
    pub n: u32,
    pub f: f64,
    /// Predicted job power, watts; 0 when `n = 0`.
    pub power: f64,
    /// The job has never run on `n` GPUs and needs a profiling window.
    pub needs_profiling: bool,
}

/// Per-job assignments aligned with the input job slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationPlan {
    pub assignments: Vec<Assignment>,
    /// Power held outside the plan (jobs being pre-run or profiled), watts.
    pub reserved_power: f64,
    pub projected_total_power: f64,
}

impl AllocationPlan {
    pub fn gpus_used(&self) -> u32 {
        self.assignments.iter().map(|a| a.n).sum()
    }

    fn total_with(&self, idx: usize, power: f64) -> f64 {
        let mut total = self.reserved_power;
        for (k, a) in self.assignments.iter().enumerate() {
            total += if k == idx { power } else { a.power };
        }
        total
    }
}

/// Heap entry: larger priority first, then earlier submission, then smaller id.
struct Entry<'a> {
    priority: f64,
    submit: f64,
    id: &'a str,
    idx: usize,
}

impl Ord for Entry<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.submit.total_cmp(&self.submit))
            .then_with(|| other.id.cmp(self.id))
    }
}
impl PartialOrd for Entry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl PartialEq for Entry<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry<'_> {}

fn entry(job: &JobState, idx: usize, priority: f64) -> Entry<'_> {
    Entry { priority, submit: job.spec.submit_time, id: job.id(), idx }
}

/// GPU allocation phase. All jobs start queued at their most efficient
/// one-GPU frequency; the job with the largest GPU marginal return is doubled
/// while GPUs and power allow. A job whose next step does not fit leaves the
/// queue; the loop ends when the best remaining return is not positive.
#[allow(clippy::too_many_arguments)]
pub fn allocate_gpus(
    jobs: &[JobState],
    ctx: &SchedContext,
    free_gpus: u32,
    reserved_power: f64,
    totals: &ClusterTotals,
    time: f64,
    log: &mut DecisionLog,
) -> Result<AllocationPlan> {
    let mut plan = AllocationPlan {
        assignments: Vec::with_capacity(jobs.len()),
        reserved_power,
        projected_total_power: reserved_power,
    };
    let mut heap = BinaryHeap::new();
    for (idx, job) in jobs.iter().enumerate() {
        let f = most_efficient_frequency(job, 1, ctx)?;
        plan.assignments.push(Assignment {
            job_id: job.id().to_string(),
            n: 0,
            f,
            power: 0.0,
            needs_profiling: false,
        });
        if let Some(p) = priority_g_at(job, 0, f, totals, ctx)? {
            heap.push(entry(job, idx, p));
        }
    }
    let limit = ctx.budget.power_limit;
    let mut free = free_gpus;
    while let Some(top) = heap.pop() {
        if free == 0 || !(top.priority > 0.0) {
            break;
        }
        let job = &jobs[top.idx];
        let (n, f) = (plan.assignments[top.idx].n, plan.assignments[top.idx].f);
        let next = next_gpu_step(n);
        if next - n > free {
            continue;
        }
        let est = estimate(job, next, f, ctx)?;
        let total = plan.total_with(top.idx, est.power);
        if total > limit {
            continue;
        }
        free -= next - n;
        let a = &mut plan.assignments[top.idx];
        a.n = next;
        a.power = est.power;
        plan.projected_total_power = total;
        log.push(Decision {
            time_s: time,
            job_id: job.id().to_string(),
            phase: DecisionPhase::Gpu,
            old_n: n,
            new_n: next,
            old_f_mhz: f,
            new_f_mhz: f,
            projected_power_w: total,
        });
        if let Some(p) = priority_g_at(job, next, f, totals, ctx)? {
            heap.push(entry(job, top.idx, p));
        }
    }
    Ok(plan)
}

/// Frequency phase: raise the allocated job with the largest frequency
/// marginal return by one step while the power limit holds.
pub fn configure_frequencies(
    mut plan: AllocationPlan,
    jobs: &[JobState],
    ctx: &SchedContext,
    totals: &ClusterTotals,
    time: f64,
    log: &mut DecisionLog,
) -> Result<AllocationPlan> {
    if plan.assignments.len() != jobs.len() {
        return Err(Error::state("plan does not match the job list"));
    }
    let mut heap = BinaryHeap::new();
    for (idx, (job, a)) in jobs.iter().zip(&plan.assignments).enumerate() {
        if let Some(p) = priority_f_at(job, a.n, a.f, totals, ctx)? {
            heap.push(entry(job, idx, p));
        }
    }
    let limit = ctx.budget.power_limit;
    while let Some(top) = heap.pop() {
        if !(top.priority > 0.0) {
            break;
        }
        let job = &jobs[top.idx];
        let (n, f) = (plan.assignments[top.idx].n, plan.assignments[top.idx].f);
        let Some(next) = next_frequency(f, ctx) else { continue };
        let est = estimate(job, n, next, ctx)?;
        let total = plan.total_with(top.idx, est.power);
        if total > limit {
            continue;
        }
        let a = &mut plan.assignments[top.idx];
        a.f = next;
        a.power = est.power;
        plan.projected_total_power = total;
        log.push(Decision {
            time_s: time,
            job_id: job.id().to_string(),
            phase: DecisionPhase::Frequency,
            old_n: n,
            new_n: n,
            old_f_mhz: f,
            new_f_mhz: next,
            projected_power_w: total,
        });
        if let Some(p) = priority_f_at(job, n, next, totals, ctx)? {
            heap.push(entry(job, top.idx, p));
        }
    }
    Ok(plan)
}

/// Full replan of `jobs` (all unfinished, all with fitted models): GPU
/// allocation, then frequencies. Jobs assigned a GPU count they were never
/// profiled on are flagged.
pub fn schedule(
    jobs: &[JobState],
    ctx: &SchedContext,
    free_gpus: u32,
    reserved_power: f64,
    time: f64,
    log: &mut DecisionLog,
) -> Result<AllocationPlan> {
    let totals = cluster_totals(jobs, ctx)?;
    let plan = allocate_gpus(jobs, ctx, free_gpus, reserved_power, &totals, time, log)?;
    let mut plan = configure_frequencies(plan, jobs, ctx, &totals, time, log)?;
    for (a, job) in plan.assignments.iter_mut().zip(jobs) {
        a.needs_profiling = a.n > 0 && !job.profiled_ns.contains(&a.n);
    }
    Ok(plan)
}
