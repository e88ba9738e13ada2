//! Trace-driven discrete-event simulation.
//!
//! Execution follows the oracle; scheduling follows models fitted from noisy
//! profiling samples. A job's lifecycle under model-driven policies:
//! arrival, a pre-run on one GPU that sweeps every supported frequency, then
//! queued or running under the policy's plans. A plan that puts a job on a GPU
//! count it was never profiled on pins it there for a profiling window; the
//! refit at the window's end is a scaling event.
//!
//! Between events every job runs at a constant rate, so progress and energy
//! are integrated exactly per interval.

mod metrics;

use std::collections::BTreeMap;

use crate::baselines::{elastic_max_tpt_with, fixed_fifo, pareto_per_job, Policy, WorkDivisor};
use crate::cluster::{ClusterSpec, PowerBudget};
use crate::error::{Error, Result};
use crate::job::{JobSpec, JobState, Phase};
use crate::oracle::{ground_truth_perf, sample_profile, HardwareProfile, ProfileSet};
use crate::perf_model::{fit_energy_model, fit_throughput_model, FitOptions, PerfModel, PerfSample};
use crate::placement::{
    apply_migrations, buddy_allocate, buddy_free, check_invariants, plan_migrations, repack, snapshot_json,
    NodeState, Placement,
};
use crate::scheduler::{schedule, SchedContext};
use crate::trace::{sort_trace, validate_trace};

pub use metrics::{
    metrics_summary, series_integral, summary_json, EventKind, JobOutcome, Metrics, PowerCheck, SchedulingEvent,
    SeriesPoint, Summary,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub policy: Policy,
    pub seed: u64,
    /// Relative noise of profiling samples.
    pub noise_rel: f64,
    /// Options for in-simulation refits; lighter than the fitting defaults.
    pub fit: FitOptions,
    /// Record a node-map snapshot after every scheduling event.
    pub snapshots: bool,
    /// Normalisation of `elastic_max_tpt` priorities.
    pub elastic_divisor: WorkDivisor,
}

impl SimOptions {
    pub fn new(policy: Policy) -> Self {
        SimOptions {
            policy,
            seed: 0,
            noise_rel: 0.03,
            fit: FitOptions { starts: 2, rel_tol: 1e-6, ..FitOptions::default() },
            snapshots: false,
            elastic_divisor: WorkDivisor::Cluster,
        }
    }
}

/// Same-time events above this count mean the loop is not advancing.
const MAX_EVENTS_AT_ONE_TIME: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stage {
    NotArrived,
    AwaitPrerun,
    Prerun { until: f64 },
    Queued,
    Running,
    Window { until: f64 },
    Done,
}

struct SimJob {
    state: JobState,
    profile: HardwareProfile,
    ordinal: u64,
    stage: Stage,
    placement: Option<Placement>,
    paused_until: Option<f64>,
    samples: Vec<PerfSample>,
    /// Power the plan reserved for the job's current configuration.
    planned_power: f64,
    finish: Option<f64>,
}

impl SimJob {
    fn paused(&self, t: f64) -> bool {
        self.paused_until.is_some_and(|p| p > t)
    }

    /// Holds GPUs for its current configuration.
    fn active(&self) -> bool {
        matches!(self.stage, Stage::Prerun { .. } | Stage::Running | Stage::Window { .. }) && self.state.n > 0
    }

    fn trains(&self) -> bool {
        matches!(self.stage, Stage::Running | Stage::Window { .. }) && self.state.n > 0
    }

    fn pinned(&self) -> bool {
        matches!(self.stage, Stage::Prerun { .. } | Stage::Window { .. })
    }

    fn set_stage(&mut self, stage: Stage) {
        self.stage = stage;
        self.state.phase = match stage {
            Stage::NotArrived | Stage::AwaitPrerun | Stage::Queued => Phase::Pending,
            Stage::Prerun { .. } | Stage::Window { .. } => Phase::Profiling,
            Stage::Running => Phase::Running,
            Stage::Done => Phase::Finished,
        };
    }

    /// Oracle step time and job power at the current configuration.
    fn true_perf(&self, gpn: u32) -> Result<(f64, f64)> {
        let config = self.state.config(self.state.n, self.state.f, gpn)?;
        let (t, e) = ground_truth_perf(&self.profile, &config)?;
        Ok((t, e / t))
    }

    fn finished_work(&self) -> bool {
        self.state.remaining_iters() <= 1e-9 * self.state.spec.total_iters as f64
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sample_seed(seed: u64, ordinal: u64, n: u32, f_index: usize) -> u64 {
    splitmix(splitmix(splitmix(seed ^ ordinal.wrapping_mul(0x1000_0000_01b3)) ^ n as u64) ^ f_index as u64)
}

struct Sim<'a> {
    cluster: &'a ClusterSpec,
    opts: &'a SimOptions,
    jobs: Vec<SimJob>,
    nodes: Vec<NodeState>,
    power_limit: f64,
    metrics: Metrics,
}

/// Runs `trace` to completion on `cluster` under `opts.policy`.
pub fn run_simulation(
    trace: &[JobSpec],
    cluster: &ClusterSpec,
    profiles: &ProfileSet,
    opts: &SimOptions,
) -> Result<Metrics> {
    cluster.validate()?;
    opts.policy.validate(cluster)?;
    if !(0.0..1.0).contains(&opts.noise_rel) {
        return Err(Error::input(format!("noise {} must lie in [0, 1)", opts.noise_rel)));
    }
    validate_trace(trace, profiles, cluster)?;
    let mut specs = trace.to_vec();
    sort_trace(&mut specs);
    let jobs = specs
        .into_iter()
        .enumerate()
        .map(|(k, spec)| {
            let profile = profiles.get(&spec.profile_name)?.clone();
            let state = JobState::new(spec, profile.bs_min, profile.bs_max, cluster.f_max());
            Ok(SimJob {
                state,
                profile,
                ordinal: k as u64,
                stage: Stage::NotArrived,
                placement: None,
                paused_until: None,
                samples: Vec::new(),
                planned_power: 0.0,
                finish: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let limited = opts.policy.power_limited();
    let mut sim = Sim {
        cluster,
        opts,
        jobs,
        nodes: (0..cluster.num_nodes).map(|i| NodeState::new(i, cluster.gpus_per_node)).collect(),
        power_limit: if limited { cluster.budget().power_limit } else { f64::INFINITY },
        metrics: Metrics {
            policy: opts.policy.name().to_string(),
            total_gpus: cluster.total_gpus(),
            power_limit_w: limited.then(|| cluster.budget().power_limit),
            ..Metrics::default()
        },
    };
    sim.run()?;
    Ok(sim.metrics)
}

impl Sim<'_> {
    fn gpn(&self) -> u32 {
        self.cluster.gpus_per_node
    }

    fn run(&mut self) -> Result<()> {
        let Some(first) = self.jobs.first() else { return Ok(()) };
        let mut t = first.state.spec.submit_time;
        let mut same_time = 0usize;
        loop {
            let events = self.collect_events(t);
            let mut completed = false;
            let mut replan = false;
            for ev in &events {
                completed |= ev.kind == EventKind::Completion;
                replan |= ev.kind != EventKind::MigrationDone;
                self.apply_event(ev, t)?;
            }
            self.metrics.events.extend(events);
            if replan {
                self.policy_step(t)?;
                self.place_pending(t)?;
                if completed {
                    self.defragment(t)?;
                }
                self.check(t)?;
                if self.opts.snapshots {
                    self.metrics.snapshots.push(snapshot_json(t, &self.nodes)?);
                }
            }
            if self.jobs.iter().all(|j| j.stage == Stage::Done) {
                break;
            }
            let Some(next) = self.next_event_time(t)? else {
                let stuck: Vec<&str> =
                    self.jobs.iter().filter(|j| j.stage != Stage::Done).map(|j| j.state.id()).take(5).collect();
                return Err(Error::State(format!(
                    "simulation stalled at t={t}: jobs {stuck:?} cannot be scheduled (power limit or cluster too small)"
                )));
            };
            if next > t {
                self.integrate(t, next)?;
                same_time = 0;
            } else {
                same_time += 1;
                if same_time > MAX_EVENTS_AT_ONE_TIME {
                    return Err(Error::Invariant(format!("event loop does not advance at t={t}")));
                }
            }
            t = next;
        }
        self.finish(t);
        Ok(())
    }

    fn finish(&mut self, t_end: f64) {
        if let Some(last) = self.metrics.series.last() {
            if last.time_s < t_end {
                self.metrics.series.push(SeriesPoint { time_s: t_end, power_w: 0.0, gpus_allocated: 0 });
            }
        }
        let mut sum = 0.0;
        for j in &self.jobs {
            let finish = j.finish.unwrap_or(t_end);
            let jct = finish - j.state.spec.submit_time;
            sum += jct;
            self.metrics.jobs.push(JobOutcome {
                job_id: j.state.id().to_string(),
                model: j.state.spec.profile_name.clone(),
                submit_time_s: j.state.spec.submit_time,
                finish_time_s: finish,
                jct_s: jct,
                energy_j: j.state.energy_used,
            });
        }
        if !self.jobs.is_empty() {
            self.metrics.avg_jct = sum / self.jobs.len() as f64;
        }
    }

    fn collect_events(&self, t: f64) -> Vec<SchedulingEvent> {
        let mut out = Vec::new();
        for j in &self.jobs {
            let id = || j.state.id().to_string();
            let kind = match j.stage {
                Stage::NotArrived if j.state.spec.submit_time <= t => Some(EventKind::Arrival),
                Stage::Running | Stage::Window { .. } if j.trains() && j.finished_work() => Some(EventKind::Completion),
                Stage::Prerun { until } | Stage::Window { until } if until <= t => Some(EventKind::Scaling),
                _ => None,
            };
            if let Some(kind) = kind {
                out.push(SchedulingEvent { time_s: t, kind, job_id: id() });
            }
            if j.paused_until.is_some_and(|p| p <= t) {
                out.push(SchedulingEvent { time_s: t, kind: EventKind::MigrationDone, job_id: id() });
            }
        }
        out.sort_by(|a, b| a.kind.cmp(&b.kind).then_with(|| a.job_id.cmp(&b.job_id)));
        out
    }

    fn index_of(&self, id: &str) -> usize {
        self.jobs.iter().position(|j| j.state.id() == id).expect("event for a known job")
    }

    fn release(&mut self, k: usize) -> Result<()> {
        if let Some(p) = self.jobs[k].placement.take() {
            buddy_free(&mut self.nodes, &p)?;
        }
        self.jobs[k].paused_until = None;
        Ok(())
    }

    fn apply_event(&mut self, ev: &SchedulingEvent, t: f64) -> Result<()> {
        let k = self.index_of(&ev.job_id);
        match ev.kind {
            EventKind::Completion => {
                self.release(k)?;
                let j = &mut self.jobs[k];
                j.state.iters_done = j.state.spec.total_iters as f64;
                j.state.n = 0;
                j.planned_power = 0.0;
                j.finish = Some(t);
                j.set_stage(Stage::Done);
            }
            EventKind::MigrationDone => {
                if self.jobs[k].paused_until.is_some_and(|p| p <= t) {
                    self.jobs[k].paused_until = None;
                }
            }
            EventKind::Scaling => match self.jobs[k].stage {
                Stage::Prerun { .. } => {
                    self.release(k)?;
                    self.profile_at(k, 1)?;
                    let j = &mut self.jobs[k];
                    j.state.n = 0;
                    j.planned_power = 0.0;
                    j.set_stage(Stage::Queued);
                }
                Stage::Window { .. } => {
                    let n = self.jobs[k].state.n;
                    self.profile_at(k, n)?;
                    self.jobs[k].set_stage(Stage::Running);
                }
                _ => {}
            },
            EventKind::Arrival => {
                if !self.opts.policy.uses_models() {
                    self.jobs[k].set_stage(Stage::Queued);
                } else if self.cluster.prerun_s == 0.0 {
                    self.profile_at(k, 1)?;
                    self.jobs[k].set_stage(Stage::Queued);
                } else {
                    self.jobs[k].set_stage(Stage::AwaitPrerun);
                }
            }
        }
        Ok(())
    }

    /// Adds one noisy sample per supported frequency at `n` GPUs and refits.
    fn profile_at(&mut self, k: usize, n: u32) -> Result<()> {
        let gpn = self.gpn();
        let j = &mut self.jobs[k];
        for (fi, &f) in self.cluster.supported_frequencies.iter().enumerate() {
            let config = j.state.config(n, f, gpn)?;
            let seed = sample_seed(self.opts.seed, j.ordinal, n, fi);
            j.samples.extend(sample_profile(&j.profile, &config, 1, self.opts.noise_rel, seed)?);
        }
        j.state.profiled_ns.insert(n);
        let fit = FitOptions { f0_candidates: Some(self.cluster.supported_frequencies.clone()), ..self.opts.fit.clone() };
        let throughput = fit_throughput_model(&j.samples, &fit)?.params;
        let energy = fit_energy_model(&j.samples, &throughput, &fit)?.params;
        j.state.model = Some(PerfModel { throughput, energy });
        Ok(())
    }

    /// Oracle most efficient one-GPU frequency and the power drawn there.
    fn prerun_config(&self, k: usize) -> Result<(f64, f64)> {
        let j = &self.jobs[k];
        let mut best: Option<(f64, f64, f64)> = None;
        for &f in &self.cluster.supported_frequencies {
            let (t, e) = ground_truth_perf(&j.profile, &j.state.config(1, f, self.gpn())?)?;
            let ee = 1.0 / (t * e);
            if best.is_none_or(|(_, b, _)| ee > b) {
                best = Some((f, ee, e / t));
            }
        }
        let (f, _, p) = best.ok_or_else(|| Error::input("empty frequency set"))?;
        Ok((f, p))
    }

    fn start_prerun(&mut self, k: usize, t: f64) -> Result<f64> {
        let (f, p) = self.prerun_config(k)?;
        let until = t + self.cluster.prerun_s;
        let j = &mut self.jobs[k];
        j.state.n = 1;
        j.state.f = f;
        j.planned_power = p;
        j.set_stage(Stage::Prerun { until });
        Ok(p)
    }

    fn assigned_gpus(&self) -> u32 {
        self.jobs.iter().filter(|j| j.active()).map(|j| j.state.n).sum()
    }

    fn awaiting_prerun(&self) -> Vec<usize> {
        (0..self.jobs.len()).filter(|&k| self.jobs[k].stage == Stage::AwaitPrerun).collect()
    }

    fn queued(&self) -> Vec<usize> {
        (0..self.jobs.len()).filter(|&k| self.jobs[k].stage == Stage::Queued).collect()
    }

    fn policy_step(&mut self, t: f64) -> Result<()> {
        match self.opts.policy {
            Policy::EnergyAware | Policy::ElasticMaxTpt { .. } => self.elastic_step(t),
            Policy::FixedFifo { uniform_frequency } => {
                let free = self.cluster.total_gpus() - self.assigned_gpus();
                let queue = self.queued();
                let states: Vec<&JobState> = queue.iter().map(|&k| &self.jobs[k].state).collect();
                let starts = fixed_fifo(&states, free, self.cluster.total_gpus(), uniform_frequency)?;
                for (q, n, f) in starts {
                    let k = queue[q];
                    self.jobs[k].state.n = n;
                    self.jobs[k].state.f = f;
                    self.jobs[k].planned_power = self.jobs[k].true_perf(self.gpn())?.1;
                    self.jobs[k].set_stage(Stage::Running);
                }
                Ok(())
            }
            Policy::ParetoPerJob => self.pareto_step(t),
        }
    }

    fn ctx(&self) -> SchedContext<'_> {
        let ctx = SchedContext::new(self.cluster);
        if self.opts.policy.power_limited() {
            ctx
        } else {
            ctx.with_budget(PowerBudget::unlimited(self.cluster.total_gpus()))
        }
    }

    fn elastic_step(&mut self, t: f64) -> Result<()> {
        let total = self.cluster.total_gpus();
        let mut pinned_gpus: u32 = self.jobs.iter().filter(|j| j.pinned()).map(|j| j.state.n).sum();
        let mut pinned_power: f64 = self.jobs.iter().filter(|j| j.pinned()).map(|j| j.planned_power).sum();
        // pre-runs go first, displacing elastic jobs if needed
        for k in self.awaiting_prerun() {
            if pinned_gpus + 1 > total {
                break;
            }
            let (_, p) = self.prerun_config(k)?;
            if pinned_power + p > self.power_limit {
                break;
            }
            self.start_prerun(k, t)?;
            pinned_gpus += 1;
            pinned_power += p;
        }

        let idx: Vec<usize> =
            (0..self.jobs.len()).filter(|&k| matches!(self.jobs[k].stage, Stage::Queued | Stage::Running)).collect();
        if idx.is_empty() {
            return Ok(());
        }
        let states: Vec<JobState> = idx.iter().map(|&k| self.jobs[k].state.clone()).collect();
        let free = total - pinned_gpus;
        let mut log = std::mem::take(&mut self.metrics.decisions);
        let plan = match self.opts.policy {
            Policy::ElasticMaxTpt { uniform_frequency } => {
                elastic_max_tpt_with(&states, &self.ctx(), free, uniform_frequency, self.opts.elastic_divisor, t, &mut log)
            }
            _ => schedule(&states, &self.ctx(), free, pinned_power, t, &mut log),
        };
        self.metrics.decisions = log;
        let plan = plan?;
        for (&k, a) in idx.iter().zip(&plan.assignments) {
            if a.n != self.jobs[k].state.n {
                self.release(k)?;
            }
            let j = &mut self.jobs[k];
            j.state.n = a.n;
            j.state.f = a.f;
            j.planned_power = a.power;
            let stage = if a.n == 0 {
                Stage::Queued
            } else if a.needs_profiling {
                Stage::Window { until: t + self.cluster.prerun_s }
            } else {
                Stage::Running
            };
            j.set_stage(stage);
        }
        Ok(())
    }

    fn pareto_step(&mut self, t: f64) -> Result<()> {
        let total = self.cluster.total_gpus();
        let mut free = total - self.assigned_gpus();
        for k in self.queued() {
            let point = pareto_per_job(&self.jobs[k].state, &self.ctx())?;
            let n = point.config.n;
            if n > free {
                break;
            }
            free -= n;
            let power = self.jobs[k].state.model()?.predict(&point.config)?.power;
            let j = &mut self.jobs[k];
            j.state.n = n;
            j.state.f = point.config.freq_mhz;
            j.planned_power = power;
            j.set_stage(Stage::Running);
        }
        for k in self.awaiting_prerun() {
            if free == 0 {
                break;
            }
            self.start_prerun(k, t)?;
            free -= 1;
        }
        Ok(())
    }

    fn placements(&self) -> BTreeMap<String, Placement> {
        self.jobs
            .iter()
            .filter_map(|j| j.placement.as_ref().map(|p| (p.job_id.clone(), p.clone())))
            .collect()
    }

    /// Pauses a moved job; profiling deadlines slide by the pause.
    fn pause(&mut self, k: usize, t: f64) {
        let delay = self.cluster.migration_delay_s;
        if delay <= 0.0 {
            return;
        }
        let j = &mut self.jobs[k];
        let end = t + delay;
        let already = j.paused_until.map_or(t, |p| p.max(t));
        let extra = (end - already).max(0.0);
        if let Stage::Prerun { until } | Stage::Window { until } = j.stage {
            let until = until + extra;
            j.stage = if matches!(j.stage, Stage::Prerun { .. }) { Stage::Prerun { until } } else { Stage::Window { until } };
        }
        j.paused_until = Some(end.max(already));
        self.metrics.migrations += 1;
    }

    /// Places jobs that hold a configuration but no GPUs, largest first. When
    /// fragmentation blocks a job, everything is repacked and moved jobs pay
    /// the migration delay.
    fn place_pending(&mut self, t: f64) -> Result<()> {
        let mut pending: Vec<usize> =
            (0..self.jobs.len()).filter(|&k| self.jobs[k].active() && self.jobs[k].placement.is_none()).collect();
        if pending.is_empty() {
            return Ok(());
        }
        pending.sort_by_key(|&k| (std::cmp::Reverse(self.jobs[k].state.n), k));
        let before = self.placements();
        let mut blocked = false;
        for &k in &pending {
            let (id, n) = (self.jobs[k].state.id().to_string(), self.jobs[k].state.n);
            match buddy_allocate(&mut self.nodes, &id, n) {
                Ok(p) => self.jobs[k].placement = Some(p),
                Err(Error::Placement(_)) => {
                    blocked = true;
                    break;
                }
                Err(Error::Capacity { requested, free }) => {
                    return Err(Error::Invariant(format!("plan over-commits GPUs: job {id} needs {requested}, {free} free")))
                }
                Err(e) => return Err(e),
            }
        }
        if !blocked {
            return Ok(());
        }
        let list: Vec<(String, u32)> =
            self.jobs.iter().filter(|j| j.active()).map(|j| (j.state.id().to_string(), j.state.n)).collect();
        let (nodes, placements) = repack(self.gpn(), self.cluster.num_nodes, &list)
            .map_err(|e| Error::Invariant(format!("repack failed: {e}")))?;
        self.nodes = nodes;
        for p in placements {
            let k = self.index_of(&p.job_id);
            let moved = before.get(&p.job_id).is_some_and(|old| *old != p);
            self.jobs[k].placement = Some(p);
            if moved {
                self.pause(k, t);
            }
        }
        Ok(())
    }

    fn defragment(&mut self, t: f64) -> Result<()> {
        let moves = plan_migrations(&self.nodes, &self.placements());
        if moves.is_empty() {
            return Ok(());
        }
        apply_migrations(&mut self.nodes, &moves)?;
        for m in moves {
            let k = self.index_of(&m.job_id);
            self.jobs[k].placement = Some(m.to);
            self.pause(k, t);
        }
        Ok(())
    }

    fn check(&self, t: f64) -> Result<()> {
        check_invariants(&self.nodes, &self.placements())?;
        for j in &self.jobs {
            if j.active() != j.placement.is_some() {
                return Err(Error::Invariant(format!("job {} placement does not match its state", j.state.id())));
            }
        }
        if self.opts.policy.power_limited() {
            let planned: f64 = self.jobs.iter().filter(|j| j.active()).map(|j| j.planned_power).sum();
            if planned > self.power_limit * (1.0 + 1e-9) {
                return Err(Error::Invariant(format!(
                    "planned power {planned} W exceeds the limit {} W at t={t}",
                    self.power_limit
                )));
            }
        }
        Ok(())
    }

    fn next_event_time(&self, t: f64) -> Result<Option<f64>> {
        let mut next: Option<f64> = None;
        let mut offer = |c: f64| next = Some(next.map_or(c, |n: f64| n.min(c)));
        for j in &self.jobs {
            match j.stage {
                Stage::NotArrived => offer(j.state.spec.submit_time),
                Stage::Prerun { until } | Stage::Window { until } => offer(until),
                _ => {}
            }
            if let Some(p) = j.paused_until {
                offer(p);
            }
            if j.trains() && !j.paused(t) {
                let (step, _) = j.true_perf(self.gpn())?;
                offer(t + j.state.remaining_iters() * step);
            }
        }
        Ok(next.map(|n| n.max(t)))
    }

    fn integrate(&mut self, t: f64, t1: f64) -> Result<()> {
        let dt = t1 - t;
        let gpn = self.gpn();
        let mut job_power = 0.0;
        let mut planned = 0.0;
        let mut busy = 0u32;
        for j in &mut self.jobs {
            if !j.active() {
                continue;
            }
            planned += j.planned_power;
            if j.paused(t) {
                continue;
            }
            let (step, p) = j.true_perf(gpn)?;
            if j.trains() {
                let total = j.state.spec.total_iters as f64;
                j.state.iters_done = (j.state.iters_done + dt / step).min(total);
            }
            j.state.energy_used += p * dt;
            job_power += p;
            busy += j.state.n;
        }
        let allocated: u32 = self.nodes.iter().map(NodeState::used).sum();
        let powered: u32 = self.nodes.iter().filter(|x| x.powered_on).map(|x| x.gpus_total).sum();
        let idle_power = self.cluster.p_idle * (powered - busy) as f64;
        let power = job_power + idle_power;
        self.metrics.total_energy += power * dt;
        self.metrics.idle_energy += idle_power * dt;
        self.metrics.series.push(SeriesPoint { time_s: t, power_w: power, gpus_allocated: allocated });
        self.metrics.power_checks.push(PowerCheck {
            time_s: t,
            duration_s: dt,
            oracle_job_power_w: job_power,
            planned_job_power_w: planned,
        });
        Ok(())
    }
}
