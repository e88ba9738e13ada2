//! Jobs as submitted and as tracked while they run.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perf_model::{Config, PerfModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub id: String,
    pub submit_time: f64,
    /// Global batch size, fixed for the job's lifetime.
    pub global_bs: u32,
    pub total_iters: u64,
    /// GPU count from the trace; only baselines use it.
    pub requested_gpus: u32,
    pub profile_name: String,
}

impl JobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::input("job id must not be empty"));
        }
        if !(self.submit_time.is_finite() && self.submit_time >= 0.0) {
            return Err(Error::input(format!("job {}: submit time must be >= 0", self.id)));
        }
        if self.global_bs == 0 || self.total_iters == 0 || self.requested_gpus == 0 {
            return Err(Error::input(format!(
                "job {}: batch size, iterations and requested GPUs must be >= 1",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pending,
    Profiling,
    Running,
    Finished,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobState {
    pub spec: JobSpec,
    /// Local batch sizes the job's model accepts.
    pub bs_min: u32,
    pub bs_max: u32,
    /// Current GPU count, 0 while queued.
    pub n: u32,
    pub f: f64,
    pub iters_done: f64,
    pub energy_used: f64,
    pub model: Option<PerfModel>,
    pub profiled_ns: BTreeSet<u32>,
    pub phase: Phase,
}

impl JobState {
    pub fn new(spec: JobSpec, bs_min: u32, bs_max: u32, f: f64) -> Self {
        JobState {
            spec,
            bs_min,
            bs_max,
            n: 0,
            f,
            iters_done: 0.0,
            energy_used: 0.0,
            model: None,
            profiled_ns: BTreeSet::new(),
            phase: Phase::Pending,
        }
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn remaining_iters(&self) -> f64 {
        (self.spec.total_iters as f64 - self.iters_done).max(0.0)
    }

    pub fn model(&self) -> Result<&PerfModel> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::state(format!("job {} has no fitted model", self.spec.id)))
    }

    /// Whether the job can run data-parallel on `n` GPUs of a cluster with
    /// `max_gpus` GPUs: a power of two dividing the global batch into a valid
    /// local batch size.
    pub fn accepts_n(&self, n: u32, max_gpus: u32) -> bool {
        n >= 1
            && n.is_power_of_two()
            && n <= max_gpus
            && self.spec.global_bs.is_multiple_of(n)
            && (self.bs_min..=self.bs_max).contains(&(self.spec.global_bs / n))
    }

    /// Configuration at `n` GPUs, filling nodes of `gpus_per_node` uniformly.
    pub fn config(&self, n: u32, f: f64, gpus_per_node: u32) -> Result<Config> {
        Config::new(n, self.spec.global_bs, f, gpus_per_node)
    }
}
