use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use ecosched::baselines::Policy;
use ecosched::cluster::ClusterSpec;
use ecosched::oracle::ProfileSet;
use ecosched::sim::{run_simulation, summary_json, Metrics, SimOptions};
use ecosched::trace::{generate_trace, read_trace, write_trace, TraceGenOptions};
use ecosched::{Error, Result};

use crate::{Axis, Common, GenArgs, RunArgs, SweepArgs};

fn load_cluster(path: Option<&Path>) -> Result<ClusterSpec> {
    match path {
        Some(p) => ClusterSpec::from_json_file(p).map_err(|e| annotate(p, e)),
        None => Ok(ClusterSpec::new(4, 8)),
    }
}

fn load_profiles(path: Option<&Path>) -> Result<ProfileSet> {
    let mut set = ProfileSet::builtin();
    if let Some(p) = path {
        set.extend_from_json_file(p).map_err(|e| annotate(p, e))?;
    }
    Ok(set)
}

fn annotate(path: &Path, e: Error) -> Error {
    match e {
        Error::Invariant(_) => e,
        other => Error::Input(format!("{}: {other}", path.display())),
    }
}

struct Setup {
    cluster: ClusterSpec,
    profiles: ProfileSet,
    trace: Vec<ecosched::job::JobSpec>,
}

fn setup(c: &Common) -> Result<Setup> {
    let mut cluster = load_cluster(c.cluster.as_deref())?;
    if let Some(eta) = c.eta {
        cluster.eta = eta;
        cluster.validate()?;
    }
    let profiles = load_profiles(c.profiles.as_deref())?;
    let trace = read_trace(&c.trace, &profiles, &cluster)?;
    Ok(Setup { cluster, profiles, trace })
}

fn write_outputs(dir: &Path, m: &Metrics) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.json"), summary_json(m)? + "\n")?;
    m.write_series_csv(BufWriter::new(File::create(dir.join("series.csv"))?))?;
    m.decisions.write_csv(BufWriter::new(File::create(dir.join("decisions.csv"))?))?;
    Ok(())
}

pub fn run(a: &RunArgs) -> Result<()> {
    let s = setup(&a.common)?;
    let policy = Policy::parse(&a.common.policy, a.frequency, &s.cluster)?;
    let opts = SimOptions { seed: a.common.seed, ..SimOptions::new(policy) };
    let m = run_simulation(&s.trace, &s.cluster, &s.profiles, &opts)?;
    write_outputs(&a.common.out, &m)?;
    println!("policy={} jobs={} avg_jct_s={:.3} total_energy_j={:.1}", policy.name(), m.jobs.len(), m.avg_jct, m.total_energy);
    Ok(())
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let s = setup(&a.common)?;
    let values = match (&a.values, a.axis) {
        (Some(v), _) => v.clone(),
        (None, Axis::Frequency) => s.cluster.supported_frequencies.clone(),
        (None, Axis::Eta) => Vec::new(),
    };
    if values.is_empty() {
        return Err(Error::Input("sweep needs at least one value".into()));
    }
    // resolve every point before running any
    let mut points = Vec::with_capacity(values.len());
    for &v in &values {
        let (cluster, policy) = match a.axis {
            Axis::Eta => {
                let c = ClusterSpec { eta: v, ..s.cluster.clone() };
                c.validate()?;
                let p = Policy::parse(&a.common.policy, None, &c)?;
                (c, p)
            }
            Axis::Frequency => {
                let p = Policy::parse(&a.common.policy, Some(v), &s.cluster)?;
                (s.cluster.clone(), p)
            }
        };
        points.push((v, cluster, policy));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.parallel.max(1))
        .build()
        .map_err(|e| Error::State(format!("thread pool: {e}")))?;
    let axis = match a.axis {
        Axis::Eta => "eta",
        Axis::Frequency => "frequency",
    };
    let results: Vec<Result<(f64, f64, f64)>> = pool.install(|| {
        points
            .par_iter()
            .map(|(v, cluster, policy)| {
                let opts = SimOptions { seed: a.common.seed, ..SimOptions::new(*policy) };
                let m = run_simulation(&s.trace, cluster, &s.profiles, &opts)?;
                write_outputs(&a.common.out.join(format!("{axis}-{v}")), &m)?;
                Ok((*v, m.avg_jct, m.total_energy))
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }
    fs::create_dir_all(&a.common.out)?;
    let mut out = BufWriter::new(File::create(a.common.out.join("sweep.csv"))?);
    writeln!(out, "value,avg_jct_s,total_energy_j")?;
    for (v, jct, energy) in &rows {
        writeln!(out, "{v},{jct},{energy}")?;
        println!("{axis}={v} avg_jct_s={jct:.3} total_energy_j={energy:.1}");
    }
    out.flush()?;
    Ok(())
}

pub fn gen_trace(a: &GenArgs) -> Result<()> {
    let cluster = load_cluster(a.cluster.as_deref())?;
    let profiles = load_profiles(a.profiles.as_deref())?;
    let opts = TraceGenOptions {
        num_jobs: a.jobs,
        mean_interarrival_s: a.mean_interarrival_s,
        min_duration_s: a.min_duration_s,
        max_duration_s: a.max_duration_s,
        max_requested_gpus: a.max_gpus,
        seed: a.seed,
    };
    let jobs = generate_trace(&opts, &profiles, &cluster)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_trace(&jobs, BufWriter::new(File::create(&a.out)?))?;
    println!("wrote {} jobs to {}", jobs.len(), a.out.display());
    Ok(())
}
