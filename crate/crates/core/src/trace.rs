//! Job traces: CSV parsing and writing, and a seeded synthetic generator.
//!
//! Columns: `job_id,submit_time_s,requested_gpus,model,global_batch_size`
//! followed by either `iterations` or `duration_s`. A duration is converted to
//! iterations with the oracle step time at the requested GPU count and the
//! cluster's top frequency.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterSpec;
use crate::error::{Error, Result};
use crate::job::JobSpec;
use crate::oracle::{ground_truth_perf, HardwareProfile, ProfileSet};
use crate::perf_model::Config;
use crate::placement::round_worker_count;

/// Models the generator samples from.
pub const MODEL_POOL: [&str; 5] = ["resnet18", "vgg16", "inception_v3", "gpt2", "deepspeech2"];

const BASE_COLUMNS: [&str; 5] = ["job_id", "submit_time_s", "requested_gpus", "model", "global_batch_size"];

/// GPUs a request maps to: capped at the cluster, rounded down to a power of
/// two, then halved while the per-GPU batch would fall below the minimum.
pub fn requested_config_gpus(requested: u32, global_bs: u32, profile: &HardwareProfile, total_gpus: u32) -> Result<u32> {
    let mut n = round_worker_count(requested.clamp(1, total_gpus))?;
    while n > 1 && (!global_bs.is_multiple_of(n) || global_bs / n < profile.bs_min) {
        n /= 2;
    }
    Ok(n)
}

/// Iterations that take `duration_s` at the requested configuration.
pub fn duration_to_iters(
    duration_s: f64,
    requested: u32,
    global_bs: u32,
    profile: &HardwareProfile,
    cluster: &ClusterSpec,
) -> Result<u64> {
    let n = requested_config_gpus(requested, global_bs, profile, cluster.total_gpus())?;
    let config = Config::new(n, global_bs, cluster.f_max(), cluster.gpus_per_node)?;
    let (t, _) = ground_truth_perf(profile, &config)?;
    Ok(((duration_s / t).round() as u64).max(1))
}

fn check_job(spec: &JobSpec, profile: &HardwareProfile, cluster: &ClusterSpec) -> Result<()> {
    spec.validate()?;
    let bs = spec.global_bs;
    if !profile.accepts_local_bs(bs) {
        return Err(Error::input(format!(
            "global batch size {bs} must fit on one GPU for the pre-run ({} accepts {}..={})",
            profile.name, profile.bs_min, profile.bs_max
        )));
    }
    let n = round_worker_count(spec.requested_gpus.clamp(1, cluster.total_gpus()))?;
    if !bs.is_multiple_of(n) {
        return Err(Error::input(format!("global batch size {bs} is not divisible by {n} GPUs")));
    }
    let f = cluster.f_max();
    if cluster.f_min() < profile.freq_min_mhz - 1e-9 || f > profile.freq_max_mhz + 1e-9 {
        return Err(Error::input(format!("cluster frequencies outside the range of model {}", profile.name)));
    }
    Ok(())
}

/// Checks every job of an in-memory trace against its profile and the cluster.
pub fn validate_trace(jobs: &[JobSpec], profiles: &ProfileSet, cluster: &ClusterSpec) -> Result<()> {
    let mut ids = BTreeSet::new();
    for spec in jobs {
        if !ids.insert(spec.id.as_str()) {
            return Err(Error::input(format!("duplicate job id {:?}", spec.id)));
        }
        let profile = profiles.get(&spec.profile_name)?;
        check_job(spec, profile, cluster).map_err(|e| Error::input(format!("job {}: {}", spec.id, strip(&e))))?;
    }
    Ok(())
}

fn strip(e: &Error) -> String {
    match e {
        Error::Input(m) => m.clone(),
        other => other.to_string(),
    }
}

pub fn parse_trace<R: Read>(reader: R, profiles: &ProfileSet, cluster: &ClusterSpec) -> Result<Vec<JobSpec>> {
    cluster.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 5];
    for (k, name) in BASE_COLUMNS.iter().enumerate() {
        idx[k] = col(name).ok_or_else(|| Error::input(format!("trace header lacks column {name}")))?;
    }
    let (amount_col, is_duration) = match (col("iterations"), col("duration_s")) {
        (Some(c), None) => (c, false),
        (None, Some(c)) => (c, true),
        _ => return Err(Error::input("trace header needs exactly one of iterations, duration_s")),
    };

    let mut jobs = Vec::new();
    let mut ids = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let fail = |msg: String| Error::input(format!("line {line}: {msg}"));
        let field = |c: usize| rec.get(c).ok_or_else(|| fail(format!("missing field {}", headers.get(c).unwrap_or("?"))));
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<T, String> {
            s.parse().map_err(|_| format!("bad {what} {s:?}"))
        }
        let id = field(idx[0])?.to_string();
        let submit_time: f64 = num(field(idx[1])?, "submit_time_s").map_err(fail)?;
        let requested_gpus: u32 = num(field(idx[2])?, "requested_gpus").map_err(fail)?;
        let model = field(idx[3])?.to_string();
        let global_bs: u32 = num(field(idx[4])?, "global_batch_size").map_err(fail)?;
        let profile = profiles.get(&model).map_err(|_| fail(format!("unknown model {model:?}")))?;
        if !ids.insert(id.clone()) {
            return Err(fail(format!("duplicate job id {id:?}")));
        }
        let amount = field(amount_col)?;
        let total_iters = if is_duration {
            let d: f64 = num(amount, "duration_s").map_err(fail)?;
            if !(d.is_finite() && d > 0.0) {
                return Err(fail(format!("duration_s must be positive, got {d}")));
            }
            if requested_gpus == 0 {
                return Err(fail("requested_gpus must be at least 1".into()));
            }
            duration_to_iters(d, requested_gpus, global_bs, profile, cluster).map_err(|e| fail(strip(&e)))?
        } else {
            num(amount, "iterations").map_err(fail)?
        };
        let spec = JobSpec { id, submit_time, global_bs, total_iters, requested_gpus, profile_name: model };
        check_job(&spec, profile, cluster).map_err(|e| fail(strip(&e)))?;
        jobs.push(spec);
    }
    sort_trace(&mut jobs);
    Ok(jobs)
}

pub fn read_trace(path: &Path, profiles: &ProfileSet, cluster: &ClusterSpec) -> Result<Vec<JobSpec>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::input(format!("cannot open trace {}: {e}", path.display())))?;
    parse_trace(file, profiles, cluster)
}

/// Orders jobs by submit time, then id.
pub fn sort_trace(jobs: &mut [JobSpec]) {
    jobs.sort_by(|a, b| a.submit_time.total_cmp(&b.submit_time).then_with(|| a.id.cmp(&b.id)));
}

/// Writes the iterations form.
pub fn write_trace<W: Write>(jobs: &[JobSpec], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(BASE_COLUMNS.iter().chain(&["iterations"]))?;
    for j in jobs {
        w.write_record([
            j.id.clone(),
            j.submit_time.to_string(),
            j.requested_gpus.to_string(),
            j.profile_name.clone(),
            j.global_bs.to_string(),
            j.total_iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceGenOptions {
    pub num_jobs: usize,
    /// Mean of the exponential inter-arrival time, seconds.
    pub mean_interarrival_s: f64,
    /// Job durations at the requested configuration are log-uniform in this range.
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Requests are powers of two up to this many GPUs.
    pub max_requested_gpus: u32,
    pub seed: u64,
}

impl Default for TraceGenOptions {
    fn default() -> Self {
        TraceGenOptions {
            num_jobs: 100,
            mean_interarrival_s: 120.0,
            min_duration_s: 600.0,
            max_duration_s: 7200.0,
            max_requested_gpus: 8,
            seed: 1,
        }
    }
}

/// Poisson arrivals; model, batch size (a power of two in the model's range)
/// and GPU request drawn uniformly.
pub fn generate_trace(opts: &TraceGenOptions, profiles: &ProfileSet, cluster: &ClusterSpec) -> Result<Vec<JobSpec>> {
    cluster.validate()?;
    if !(opts.mean_interarrival_s >= 0.0 && opts.min_duration_s > 0.0 && opts.min_duration_s <= opts.max_duration_s) {
        return Err(Error::input("bad trace generator options"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let max_req = round_worker_count(opts.max_requested_gpus.clamp(1, cluster.total_gpus()))?;
    let width = opts.num_jobs.max(1).to_string().len();
    let mut t = 0.0;
    let mut jobs = Vec::with_capacity(opts.num_jobs);
    for k in 0..opts.num_jobs {
        if k > 0 {
            let u: f64 = rng.gen();
            t += -opts.mean_interarrival_s * (1.0 - u).ln();
        }
        let model = MODEL_POOL[rng.gen_range(0..MODEL_POOL.len())];
        let profile = profiles.get(model)?;
        let batches: Vec<u32> = (0..31)
            .map(|s| 1u32 << s)
            .filter(|&b| profile.accepts_local_bs(b))
            .collect();
        if batches.is_empty() {
            return Err(Error::input(format!("model {model} has no power-of-two batch size")));
        }
        let global_bs = batches[rng.gen_range(0..batches.len())];
        let requested = 1u32 << rng.gen_range(0..=max_req.trailing_zeros());
        let requested = requested_config_gpus(requested, global_bs, profile, cluster.total_gpus())?;
        let u: f64 = rng.gen();
        let duration = opts.min_duration_s * (opts.max_duration_s / opts.min_duration_s).powf(u);
        let total_iters = duration_to_iters(duration, requested, global_bs, profile, cluster)?;
        jobs.push(JobSpec {
            id: format!("j{k:0width$}"),
            submit_time: (t * 1000.0).round() / 1000.0,
            global_bs,
            total_iters,
            requested_gpus: requested,
            profile_name: model.to_string(),
        });
    }
    sort_trace(&mut jobs);
    Ok(jobs)
}
