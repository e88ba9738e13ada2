//! Fitting the step-time and energy models to profiled samples.
//!
//! Both fits minimise the mean squared relative error with the bounded
//! Levenberg-Marquardt solver in [`crate::lsq`]. Parameters are optimised in a
//! scaled space where every coefficient is O(1) for the data at hand; a
//! coefficient the samples cannot inform (e.g. synchronisation terms when all
//! samples ran on one GPU) is frozen at its default instead of drifting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Config, CubicPower, EnergyParams, GradPower, LinearPower, PerfSample, StepTime, SyncParams,
    ThroughputParams,
};
use crate::error::{Error, Result};
use crate::lsq::{BoxProblem, LmOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Number of solver starts; the first is the unperturbed default point.
    pub starts: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
    /// Breakpoints tried for the energy model. Defaults to the distinct sample frequencies.
    pub f0_candidates: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { starts: 8, max_iters: 500, rel_tol: 1e-8, seed: 0x5eed, f0_candidates: None }
    }
}

/// Result of a fit. `converged` is false when the iteration cap was hit; the
/// parameters are then the best point found.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<P> {
    pub params: P,
    pub converged: bool,
    /// Mean squared relative error on the training samples.
    pub mse_rel: f64,
    pub iterations: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn distinct_freqs(samples: &[PerfSample]) -> Vec<f64> {
    let mut fs: Vec<f64> = samples.iter().map(|s| s.config.freq_mhz).collect();
    fs.sort_by(f64::total_cmp);
    fs.dedup();
    fs
}

fn check_samples(samples: &[PerfSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::input("cannot fit a model to zero samples"));
    }
    samples.iter().try_for_each(PerfSample::validate)
}

/// One parameter of a scaled problem.
#[derive(Debug, Clone, Copy)]
struct Slot {
    /// Real value = scaled value * scale.
    scale: f64,
    /// Bounds on the real value.
    lower: f64,
    upper: f64,
    /// Real value used when frozen or as the unit start.
    default: f64,
    free: bool,
    kind: StartKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum StartKind {
    /// Starts at scaled 1.0, perturbed multiplicatively.
    Unit,
    /// Starts at the real default, perturbed upward (exponents, log shifts).
    Floor,
}

impl Slot {
    fn coeff(scale: f64, free: bool) -> Self {
        Slot {
            scale,
            lower: 0.0,
            upper: f64::INFINITY,
            default: 0.0,
            free,
            kind: StartKind::Unit,
        }
    }

    fn floor(lower: f64, upper: f64, free: bool) -> Self {
        Slot { scale: 1.0, lower, upper, default: lower, free, kind: StartKind::Floor }
    }
}

/// Runs the multi-start solver and returns the real-valued best point.
fn multi_start<F>(slots: &[Slot], n_res: usize, opts: &FitOptions, mut eval: F) -> (Vec<f64>, f64, bool, usize)
where
    F: FnMut(&[f64], &mut [f64]),
{
    let p = slots.len();
    let lower: Vec<f64> = slots.iter().map(|s| s.lower / s.scale).collect();
    let upper: Vec<f64> = slots.iter().map(|s| s.upper / s.scale).collect();
    let free: Vec<bool> = slots.iter().map(|s| s.free).collect();
    let mut real = vec![0.0; p];
    let mut problem = BoxProblem {
        residuals: |x: &[f64], r: &mut [f64]| {
            for i in 0..p {
                real[i] = x[i] * slots[i].scale;
            }
            eval(&real, r)
        },
        n_residuals: n_res,
        lower: &lower,
        upper: &upper,
        free: &free,
    };
    let lm = LmOptions { max_iters: opts.max_iters, rel_tol: opts.rel_tol };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut iterations = 0;
    for start in 0..opts.starts.max(1) {
        let x0: Vec<f64> = slots
            .iter()
            .map(|s| {
                if !s.free {
                    return s.default / s.scale;
                }
                match (s.kind, start) {
                    (StartKind::Unit, 0) => 1.0,
                    (StartKind::Unit, _) => rng.gen_range(-1.4_f64..1.4).exp(),
                    (StartKind::Floor, 0) => s.default,
                    (StartKind::Floor, _) => s.default + rng.gen_range(0.0..3.0),
                }
            })
            .collect();
        let out = problem.minimize(&x0, &lm);
        iterations += out.iterations;
        if best.as_ref().is_none_or(|b| out.cost < b.1) {
            best = Some((out.x, out.cost, out.converged));
        }
    }
    let (x, cost, converged) = best.expect("at least one start");
    let real = x.iter().zip(slots).map(|(v, s)| v * s.scale).collect();
    (real, cost, converged, iterations)
}

const TP_LEN: usize = 15;

fn throughput_from_vec(v: &[f64]) -> ThroughputParams {
    let sync = |o: usize| SyncParams { alpha: v[o], beta: v[o + 1], theta: v[o + 2], kappa: v[o + 3] };
    ThroughputParams {
        io_alpha: v[0],
        io_beta: v[1],
        grad_alpha: v[2],
        grad_beta: v[3],
        grad_kappa: v[4],
        sync_local: sync(5),
        sync_node: sync(9),
        gamma1: v[13],
        gamma2: v[14],
    }
}

const GAMMA_MAX: f64 = 64.0;

fn throughput_slots(samples: &[PerfSample]) -> Vec<Slot> {
    let s_t = median(samples.iter().map(|s| s.step_time).collect());
    let bs = median(samples.iter().map(|s| f64::from(s.config.local_bs)).collect());
    let bsr = median(
        samples
            .iter()
            .map(|s| f64::from(s.config.local_bs * s.config.gpus_per_node_used))
            .collect(),
    );
    let freqs = distinct_freqs(samples);
    let f_ref = *freqs.last().expect("non-empty");
    let freq_ok = freqs.len() >= 2;
    let q = s_t / 4.0;

    let local: Vec<&PerfSample> =
        samples.iter().filter(|s| s.config.n >= 2 && s.config.single_node()).collect();
    let node: Vec<&PerfSample> = samples.iter().filter(|s| !s.config.single_node()).collect();
    let sync_slots = |group: &[&PerfSample]| {
        let used = !group.is_empty();
        let grows = group.iter().any(|s| s.config.n > 2);
        [
            Slot::coeff(q * f_ref, used && freq_ok),
            Slot::coeff(q, grows),
            Slot::coeff(q, used),
            Slot::coeff(q * f_ref, grows && freq_ok),
        ]
    };
    let any_multi = samples.iter().any(|s| s.config.n >= 2);

    let mut slots = vec![
        Slot::coeff(q, true),
        Slot::coeff(q / bsr, true),
        Slot::coeff(q, true),
        Slot::coeff(q / bs, true),
        Slot::coeff(q * f_ref / bs, freq_ok),
    ];
    slots.extend(sync_slots(&local));
    slots.extend(sync_slots(&node));
    slots.push(Slot::floor(1.0, GAMMA_MAX, true));
    slots.push(Slot::floor(1.0, GAMMA_MAX, any_multi));
    debug_assert_eq!(slots.len(), TP_LEN);
    slots
}

/// Fits the step-time model by bounded least squares on relative error.
///
/// Frequency coefficients need samples at two or more frequencies and the
/// synchronisation terms need multi-GPU samples; otherwise they stay at zero.
pub fn fit_throughput_model(
    samples: &[PerfSample],
    opts: &FitOptions,
) -> Result<FitReport<ThroughputParams>> {
    check_samples(samples)?;
    let slots = throughput_slots(samples);
    let (v, cost, converged, iterations) = multi_start(&slots, samples.len(), opts, |x, r| {
        let p = throughput_from_vec(x);
        for (ri, s) in r.iter_mut().zip(samples) {
            *ri = p.breakdown_unchecked(&s.config).total / s.step_time - 1.0;
        }
    });
    Ok(FitReport { params: throughput_from_vec(&v), converged, mse_rel: cost, iterations })
}

const EP_LEN: usize = 20;

fn energy_from_vec(f0: f64, v: &[f64]) -> EnergyParams {
    EnergyParams {
        f0,
        grad_low: GradPower {
            kappa: LinearPower { a: v[0], b: v[1] },
            alpha: v[2],
            beta: v[3],
            theta: v[4],
        },
        grad_high: GradPower {
            kappa: CubicPower { a: v[5], b: v[6], c: v[7], d: v[8] },
            alpha: v[9],
            beta: v[10],
            theta: v[11],
        },
        sync_low: LinearPower { a: v[12], b: v[13] },
        sync_high: CubicPower { a: v[14], b: v[15], c: v[16], d: v[17] },
        p_static_low: v[18],
        c_h: v[19],
    }
}

struct EnergyRow {
    config: Config,
    times: StepTime,
    energy: f64,
}

fn energy_slots(rows: &[EnergyRow], f0: f64) -> Vec<Slot> {
    let s_p = median(
        rows.iter()
            .map(|r| r.energy / (f64::from(r.config.n) * r.times.total))
            .collect(),
    );
    let f_ref = rows.iter().map(|r| r.config.freq_mhz).fold(0.0, f64::max);
    let ln_ref = median(rows.iter().map(|r| f64::from(r.config.local_bs)).collect()).ln_1p();
    let low = rows.iter().any(|r| r.config.freq_mhz < f0);
    let high = rows.iter().any(|r| r.config.freq_mhz >= f0);
    let low_sync = rows.iter().any(|r| r.config.freq_mhz < f0 && r.times.sync > 0.0);
    let high_sync = rows.iter().any(|r| r.config.freq_mhz >= f0 && r.times.sync > 0.0);
    let h = s_p / 2.0;
    let q = s_p / 4.0;
    let theta = |free| Slot { default: 1.0, ..Slot::floor(1.0, f64::INFINITY, free) };
    let slots = vec![
        Slot::coeff(h / f_ref, low),
        Slot::coeff(h, low),
        Slot::coeff(0.5 / ln_ref, low),
        Slot::coeff(0.5, low),
        theta(low),
        Slot::coeff(q / f_ref.powi(3), high),
        Slot::coeff(q / f_ref.powi(2), high),
        Slot::coeff(q / f_ref, high),
        Slot::coeff(q, high),
        Slot::coeff(0.5 / ln_ref, high),
        Slot::coeff(0.5, high),
        theta(high),
        Slot::coeff(h / f_ref, low_sync),
        Slot::coeff(h, low_sync),
        Slot::coeff(q / f_ref.powi(3), high_sync),
        Slot::coeff(q / f_ref.powi(2), high_sync),
        Slot::coeff(q / f_ref, high_sync),
        Slot::coeff(q, high_sync),
        Slot::coeff(q, low),
        Slot::coeff(q / f_ref, high),
    ];
    debug_assert_eq!(slots.len(), EP_LEN);
    slots
}

/// Fits the energy model given an already fitted step-time model.
///
/// The breakpoint `f0` is chosen by grid search: each candidate gets its own
/// bounded fit and the lowest training error wins. Among near-ties the
/// candidate whose branches see enough distinct frequencies to pin their
/// polynomials is preferred, then the smaller breakpoint.
pub fn fit_energy_model(
    samples: &[PerfSample],
    tparams: &ThroughputParams,
    opts: &FitOptions,
) -> Result<FitReport<EnergyParams>> {
    check_samples(samples)?;
    tparams.validate()?;
    let rows: Vec<EnergyRow> = samples
        .iter()
        .map(|s| EnergyRow {
            config: s.config,
            times: tparams.breakdown_unchecked(&s.config),
            energy: s.energy_per_iter,
        })
        .collect();
    let mut candidates = opts.f0_candidates.clone().unwrap_or_else(|| distinct_freqs(samples));
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    if candidates.is_empty() {
        return Err(Error::input("no breakpoint candidates for the energy model"));
    }

    let mut fits: Vec<(usize, FitReport<EnergyParams>)> = Vec::with_capacity(candidates.len());
    let mut iterations = 0;
    for &f0 in &candidates {
        let slots = energy_slots(&rows, f0);
        let (v, cost, converged, its) = multi_start(&slots, rows.len(), opts, |x, r| {
            let p = energy_from_vec(f0, x);
            for (ri, row) in r.iter_mut().zip(&rows) {
                *ri = p.energy_unchecked(&row.config, &row.times) / row.energy - 1.0;
            }
        });
        iterations += its;
        let report = FitReport { params: energy_from_vec(f0, &v), converged, mse_rel: cost, iterations: 0 };
        fits.push((frequency_deficit(samples, f0), report));
    }
    let floor = fits.iter().map(|(_, r)| r.mse_rel).fold(f64::INFINITY, f64::min);
    let best = fits
        .into_iter()
        .filter(|(_, r)| r.mse_rel <= floor * (1.0 + 1e-9) + 1e-18)
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.params.f0.total_cmp(&b.1.params.f0)))
        .map(|(_, r)| r);
    let mut report = best.expect("non-empty candidates");
    report.iterations = iterations;
    Ok(report)
}

/// Distinct frequencies missing for each populated branch to determine its
/// polynomial in f (two for the linear branch, four for the cubic one).
fn frequency_deficit(samples: &[PerfSample], f0: f64) -> usize {
    let fs = distinct_freqs(samples);
    let low = fs.iter().filter(|&&f| f < f0).count();
    let high = fs.len() - low;
    let missing = |have: usize, need: usize| if have == 0 { 0 } else { need.saturating_sub(have) };
    missing(low, 2) + missing(high, 4)
}
