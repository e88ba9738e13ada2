//! Step-time and energy models for data-parallel training jobs.
//!
//! The step time of one iteration is built from three components: storage IO,
//! local gradient computation and gradient synchronisation. They are combined
//! with two overlap exponents that interpolate between a plain sum (no
//! overlap) and the maximum (full overlap). Energy per iteration is the sum of
//! gradient, synchronisation and static power, each weighted by the time it is
//! drawn, over all GPUs of the job. Power draw switches between a low and a
//! high frequency regime at the breakpoint `f0`.
//!
//! Units are MHz, seconds, joules and watts throughout.

mod fit;

pub use fit::{fit_energy_model, fit_throughput_model, FitOptions, FitReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lp_combine, Scalar};

/// A (GPU count, local batch size, frequency) configuration of one job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Config<T = f64> {
    /// Number of GPUs.
    pub n: u32,
    /// Per-GPU batch size (global batch size / `n`).
    pub local_bs: u32,
    /// GPU core frequency in MHz.
    pub freq_mhz: T,
    /// GPUs the job occupies on each of its nodes.
    pub gpus_per_node_used: u32,
}

impl<T: Scalar> Config<T> {
    /// Builds the configuration for running a job of global batch size
    /// `global_bs` on `n` GPUs. Jobs larger than a node fill whole nodes.
    pub fn new(n: u32, global_bs: u32, freq_mhz: T, gpus_per_node: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::input("GPU count must be at least 1"));
        }
        if gpus_per_node == 0 {
            return Err(Error::input("gpus_per_node must be at least 1"));
        }
        if !global_bs.is_multiple_of(n) {
            return Err(Error::input(format!(
                "global batch size {global_bs} is not divisible by {n} GPUs"
            )));
        }
        let cfg = Config {
            n,
            local_bs: global_bs / n,
            freq_mhz,
            gpus_per_node_used: n.min(gpus_per_node),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn global_bs(&self) -> u32 {
        self.n * self.local_bs
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::input("GPU count must be at least 1"));
        }
        if self.local_bs == 0 {
            return Err(Error::input("local batch size must be at least 1"));
        }
        if self.gpus_per_node_used == 0 || self.gpus_per_node_used > self.n {
            return Err(Error::input(format!(
                "GPUs per node {} must lie in 1..={}",
                self.gpus_per_node_used, self.n
            )));
        }
        if !(self.freq_mhz.is_finite() && self.freq_mhz > T::zero()) {
            return Err(Error::input(format!(
                "frequency {} MHz is not a positive finite value",
                self.freq_mhz
            )));
        }
        Ok(())
    }

    /// Whether the job fits on a single node.
    pub fn single_node(&self) -> bool {
        self.n == self.gpus_per_node_used
    }

    pub fn cast<U: Scalar>(&self) -> Config<U> {
        Config {
            n: self.n,
            local_bs: self.local_bs,
            freq_mhz: U::lit(self.freq_mhz.to_f64().unwrap_or(f64::NAN)),
            gpus_per_node_used: self.gpus_per_node_used,
        }
    }
}

/// Coefficients of the synchronisation time for one interconnect level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncParams<T = f64> {
    /// Frequency-scaled constant term, seconds·MHz.
    pub alpha: T,
    /// Per-extra-GPU term, seconds.
    pub beta: T,
    /// Constant term, seconds.
    pub theta: T,
    /// Frequency-scaled per-extra-GPU term, seconds·MHz.
    pub kappa: T,
}

impl<T: Scalar> Default for SyncParams<T> {
    fn default() -> Self {
        SyncParams { alpha: T::zero(), beta: T::zero(), theta: T::zero(), kappa: T::zero() }
    }
}

impl<T: Scalar> SyncParams<T> {
    fn time(&self, n: u32, f: T) -> T {
        let extra = T::of_count(n) - T::lit(2.0);
        self.alpha / f + (self.kappa / f + self.beta) * extra + self.theta
    }

    fn values(&self) -> [T; 4] {
        [self.alpha, self.beta, self.theta, self.kappa]
    }
}

/// Fitted coefficients of the step-time model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputParams<T = f64> {
    /// IO constant, seconds.
    pub io_alpha: T,
    /// IO cost per sample per co-located GPU, seconds/sample.
    pub io_beta: T,
    /// Gradient constant, seconds.
    pub grad_alpha: T,
    /// Frequency-independent gradient cost, seconds/sample.
    pub grad_beta: T,
    /// Frequency-scaled gradient cost, seconds·MHz/sample.
    pub grad_kappa: T,
    /// Synchronisation inside one node.
    pub sync_local: SyncParams<T>,
    /// Synchronisation across nodes.
    pub sync_node: SyncParams<T>,
    /// Overlap exponent between IO and gradient computation (>= 1).
    pub gamma1: T,
    /// Overlap exponent between computation and synchronisation (>= 1).
    pub gamma2: T,
}

impl<T: Scalar> Default for ThroughputParams<T> {
    fn default() -> Self {
        ThroughputParams {
            io_alpha: T::zero(),
            io_beta: T::zero(),
            grad_alpha: T::zero(),
            grad_beta: T::zero(),
            grad_kappa: T::zero(),
            sync_local: SyncParams::default(),
            sync_node: SyncParams::default(),
            gamma1: T::one(),
            gamma2: T::one(),
        }
    }
}

/// Per-component step time of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTime<T = f64> {
    pub io: T,
    pub grad: T,
    pub sync: T,
    /// Overlapped iteration time.
    pub total: T,
}

impl<T: Scalar> ThroughputParams<T> {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            self.io_alpha,
            self.io_beta,
            self.grad_alpha,
            self.grad_beta,
            self.grad_kappa,
        ]
        .into_iter()
        .chain(self.sync_local.values())
        .chain(self.sync_node.values());
        for v in coeffs {
            if !(v.is_finite() && v >= T::zero()) {
                return Err(Error::input(format!("throughput coefficient {v} must be >= 0")));
            }
        }
        if !(self.gamma1 >= T::one() && self.gamma2 >= T::one())
            || !self.gamma1.is_finite()
            || !self.gamma2.is_finite()
        {
            return Err(Error::input("overlap exponents must be finite and >= 1"));
        }
        Ok(())
    }

    /// Component and total step times without input validation.
    pub(crate) fn breakdown_unchecked(&self, c: &Config<T>) -> StepTime<T> {
        let f = c.freq_mhz;
        let bs = T::of_count(c.local_bs);
        let io = self.io_alpha + self.io_beta * bs * T::of_count(c.gpus_per_node_used);
        let grad = self.grad_alpha + (self.grad_beta + self.grad_kappa / f) * bs;
        let sync = if c.n == 1 {
            T::zero()
        } else if c.single_node() {
            self.sync_local.time(c.n, f)
        } else {
            self.sync_node.time(c.n, f)
        };
        let total = combine_overlap(io, grad, sync, self.gamma1, self.gamma2);
        StepTime { io, grad, sync, total }
    }

    pub fn cast<U: Scalar>(&self) -> ThroughputParams<U> {
        let c = |v: T| U::lit(v.to_f64().unwrap_or(f64::NAN));
        let s = |p: &SyncParams<T>| SyncParams {
            alpha: c(p.alpha),
            beta: c(p.beta),
            theta: c(p.theta),
            kappa: c(p.kappa),
        };
        ThroughputParams {
            io_alpha: c(self.io_alpha),
            io_beta: c(self.io_beta),
            grad_alpha: c(self.grad_alpha),
            grad_beta: c(self.grad_beta),
            grad_kappa: c(self.grad_kappa),
            sync_local: s(&self.sync_local),
            sync_node: s(&self.sync_node),
            gamma1: c(self.gamma1),
            gamma2: c(self.gamma2),
        }
    }
}

/// Combines component times: `((io^g1 + grad^g1)^(g2/g1) + sync^g2)^(1/g2)`.
///
/// `g1 = g2 = 1` gives the plain sum; large exponents approach the maximum.
pub fn combine_overlap<T: Scalar>(io: T, grad: T, sync: T, gamma1: T, gamma2: T) -> T {
    lp_combine(lp_combine(io, grad, gamma1), sync, gamma2)
}

/// `a·f + b`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearPower<T = f64> {
    pub a: T,
    pub b: T,
}

/// `a·f³ + b·f² + c·f + d`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicPower<T = f64> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

impl<T: Scalar> LinearPower<T> {
    pub fn eval(&self, f: T) -> T {
        self.a * f + self.b
    }
}

impl<T: Scalar> CubicPower<T> {
    pub fn eval(&self, f: T) -> T {
        ((self.a * f + self.b) * f + self.c) * f + self.d
    }
}

impl<T: Scalar> Default for LinearPower<T> {
    fn default() -> Self {
        LinearPower { a: T::zero(), b: T::zero() }
    }
}

impl<T: Scalar> Default for CubicPower<T> {
    fn default() -> Self {
        CubicPower { a: T::zero(), b: T::zero(), c: T::zero(), d: T::zero() }
    }
}

/// Gradient power for one frequency regime: `kappa(f) · (alpha·ln(bs + theta) + beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradPower<K, T = f64> {
    pub kappa: K,
    pub alpha: T,
    pub beta: T,
    /// Shift inside the logarithm, kept >= 1.
    pub theta: T,
}

impl<K: Default, T: Scalar> Default for GradPower<K, T> {
    fn default() -> Self {
        GradPower { kappa: K::default(), alpha: T::zero(), beta: T::zero(), theta: T::one() }
    }
}

impl<K, T: Scalar> GradPower<K, T> {
    fn batch_factor(&self, bs: T) -> T {
        self.alpha * (bs + self.theta).ln() + self.beta
    }
}

/// Fitted coefficients of the per-iteration energy model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams<T = f64> {
    /// Frequency (MHz) separating the low and high power regimes.
    pub f0: T,
    pub grad_low: GradPower<LinearPower<T>, T>,
    pub grad_high: GradPower<CubicPower<T>, T>,
    pub sync_low: LinearPower<T>,
    pub sync_high: CubicPower<T>,
    /// Static power below `f0`, watts.
    pub p_static_low: T,
    /// Static power slope above `f0`, watts/MHz.
    pub c_h: T,
}

impl<T: Scalar> Default for EnergyParams<T> {
    fn default() -> Self {
        EnergyParams {
            f0: T::zero(),
            grad_low: GradPower::default(),
            grad_high: GradPower::default(),
            sync_low: LinearPower::default(),
            sync_high: CubicPower::default(),
            p_static_low: T::zero(),
            c_h: T::zero(),
        }
    }
}

/// Per-GPU component powers at one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBreakdown<T = f64> {
    pub grad: T,
    pub sync: T,
    pub stat: T,
}

impl<T: Scalar> EnergyParams<T> {
    pub fn validate(&self) -> Result<()> {
        let gl = &self.grad_low;
        let gh = &self.grad_high;
        let vals = [
            self.f0,
            gl.kappa.a,
            gl.kappa.b,
            gl.alpha,
            gl.beta,
            gh.kappa.a,
            gh.kappa.b,
            gh.kappa.c,
            gh.kappa.d,
            gh.alpha,
            gh.beta,
            self.sync_low.a,
            self.sync_low.b,
            self.sync_high.a,
            self.sync_high.b,
            self.sync_high.c,
            self.sync_high.d,
            self.p_static_low,
            self.c_h,
        ];
        for v in vals {
            if !(v.is_finite() && v >= T::zero()) {
                return Err(Error::input(format!("energy coefficient {v} must be >= 0")));
            }
        }
        if !(gl.theta >= T::one() && gh.theta >= T::one()) {
            return Err(Error::input("log shift theta must be >= 1"));
        }
        Ok(())
    }

    pub fn is_low(&self, f: T) -> bool {
        f < self.f0
    }

    pub fn powers(&self, f: T, local_bs: T) -> PowerBreakdown<T> {
        if self.is_low(f) {
            PowerBreakdown {
                grad: self.grad_low.kappa.eval(f) * self.grad_low.batch_factor(local_bs),
                sync: self.sync_low.eval(f),
                stat: self.p_static_low,
            }
        } else {
            PowerBreakdown {
                grad: self.grad_high.kappa.eval(f) * self.grad_high.batch_factor(local_bs),
                sync: self.sync_high.eval(f),
                stat: self.c_h * f,
            }
        }
    }

    /// Energy per iteration given an already computed step time breakdown.
    pub(crate) fn energy_unchecked(&self, c: &Config<T>, t: &StepTime<T>) -> T {
        let p = self.powers(c.freq_mhz, T::of_count(c.local_bs));
        (p.grad * t.grad + p.sync * t.sync + p.stat * t.total) * T::of_count(c.n)
    }

    pub fn cast<U: Scalar>(&self) -> EnergyParams<U> {
        let c = |v: T| U::lit(v.to_f64().unwrap_or(f64::NAN));
        EnergyParams {
            f0: c(self.f0),
            grad_low: GradPower {
                kappa: LinearPower { a: c(self.grad_low.kappa.a), b: c(self.grad_low.kappa.b) },
                alpha: c(self.grad_low.alpha),
                beta: c(self.grad_low.beta),
                theta: c(self.grad_low.theta),
            },
            grad_high: GradPower {
                kappa: CubicPower {
                    a: c(self.grad_high.kappa.a),
                    b: c(self.grad_high.kappa.b),
                    c: c(self.grad_high.kappa.c),
                    d: c(self.grad_high.kappa.d),
                },
                alpha: c(self.grad_high.alpha),
                beta: c(self.grad_high.beta),
                theta: c(self.grad_high.theta),
            },
            sync_low: LinearPower { a: c(self.sync_low.a), b: c(self.sync_low.b) },
            sync_high: CubicPower {
                a: c(self.sync_high.a),
                b: c(self.sync_high.b),
                c: c(self.sync_high.c),
                d: c(self.sync_high.d),
            },
            p_static_low: c(self.p_static_low),
            c_h: c(self.c_h),
        }
    }
}

/// One profiled measurement of a job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfSample<T = f64> {
    pub config: Config<T>,
    /// Seconds per iteration.
    pub step_time: T,
    /// Joules per iteration, summed over the job's GPUs.
    pub energy_per_iter: T,
}

impl<T: Scalar> PerfSample<T> {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if !(self.step_time > T::zero() && self.step_time.is_finite()) {
            return Err(Error::input("sample step time must be positive"));
        }
        if !(self.energy_per_iter > T::zero() && self.energy_per_iter.is_finite()) {
            return Err(Error::input("sample energy must be positive"));
        }
        Ok(())
    }
}

/// Iteration time of `config`.
pub fn predict_step_time<T: Scalar>(params: &ThroughputParams<T>, config: &Config<T>) -> Result<T> {
    Ok(step_time_breakdown(params, config)?.total)
}

/// Component times of `config`.
pub fn step_time_breakdown<T: Scalar>(
    params: &ThroughputParams<T>,
    config: &Config<T>,
) -> Result<StepTime<T>> {
    config.validate()?;
    Ok(params.breakdown_unchecked(config))
}

/// GPU energy per iteration summed over all `n` GPUs.
pub fn predict_energy_per_iter<T: Scalar>(
    tparams: &ThroughputParams<T>,
    eparams: &EnergyParams<T>,
    config: &Config<T>,
) -> Result<T> {
    let t = step_time_breakdown(tparams, config)?;
    Ok(eparams.energy_unchecked(config, &t))
}

/// Average power of the whole job, `energy_per_iter / step_time`.
pub fn predict_job_power<T: Scalar>(
    tparams: &ThroughputParams<T>,
    eparams: &EnergyParams<T>,
    config: &Config<T>,
) -> Result<T> {
    let p = PerfModel { throughput: *tparams, energy: *eparams }.predict(config)?;
    Ok(p.power)
}

/// Step time, energy and power predicted for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T = f64> {
    pub step_time: StepTime<T>,
    pub energy_per_iter: T,
    pub power: T,
}

/// A job's throughput and energy model evaluated together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfModel<T = f64> {
    pub throughput: ThroughputParams<T>,
    pub energy: EnergyParams<T>,
}

impl<T: Scalar> Default for PerfModel<T> {
    fn default() -> Self {
        PerfModel { throughput: ThroughputParams::default(), energy: EnergyParams::default() }
    }
}

impl<T: Scalar> PerfModel<T> {
    pub fn predict(&self, config: &Config<T>) -> Result<Prediction<T>> {
        config.validate()?;
        Ok(self.predict_unchecked(config))
    }

    pub(crate) fn predict_unchecked(&self, config: &Config<T>) -> Prediction<T> {
        let t = self.throughput.breakdown_unchecked(config);
        let e = self.energy.energy_unchecked(config, &t);
        Prediction { step_time: t, energy_per_iter: e, power: e / t.total }
    }

    pub fn validate(&self) -> Result<()> {
        self.throughput.validate()?;
        self.energy.validate()
    }

    pub fn cast<U: Scalar>(&self) -> PerfModel<U> {
        PerfModel { throughput: self.throughput.cast(), energy: self.energy.cast() }
    }
}
