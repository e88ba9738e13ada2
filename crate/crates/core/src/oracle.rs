//! Synthetic hardware standing in for GPU measurements.
//!
//! Each [`HardwareProfile`] carries a hidden parameter set of the same model
//! family the scheduler fits, plus the domain it is valid on. Parameter values
//! are synthetic: hand-shaped so throughput saturates with GPU count and energy
//! per iteration is U-shaped in frequency. Two data points are pinned exactly:
//! `vgg16-fixture` at global batch 64 and `gpt2` at global batch 32 on two GPUs,
//! both at [`FIXTURE_FREQ_MHZ`].

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perf_model::{
    Config, CubicPower, EnergyParams, GradPower, LinearPower, PerfModel, PerfSample, SyncParams,
    ThroughputParams,
};

/// Highest (default) frequency of the reference frequency set.
pub const FIXTURE_FREQ_MHZ: f64 = 1410.0;
/// Lowest frequency of the reference frequency set.
pub const FIXTURE_FREQ_MIN_MHZ: f64 = 510.0;
/// Idle GPU power assumed by the calibrated fixtures.
pub const FIXTURE_IDLE_W: f64 = 50.0;

/// vgg16-fixture, global batch 64, at [`FIXTURE_FREQ_MHZ`]: (GPUs, step time s, energy J).
pub const VGG16_FIXTURE_POINTS: [(u32, f64, f64); 2] = [(1, 0.114, 27.0), (2, 0.112, 39.0)];

/// gpt2 at global batch 32 on two GPUs of one node, at [`FIXTURE_FREQ_MHZ`].
///
/// Chosen so that running vgg16-fixture (1 GPU) then gpt2 (2 GPUs) back to
/// back, with one idle GPU during the first job, averages 180.4 s JCT and
/// consumes 85546 J.
pub const GPT2_FIXTURE_POINT: (u32, f64, f64) =
    (2, 0.1328, (85546.0 - 27000.0 - 114.0 * FIXTURE_IDLE_W) / 1000.0);

/// Ground-truth performance of one model architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub name: String,
    /// Smallest and largest valid local batch size.
    pub bs_min: u32,
    pub bs_max: u32,
    pub freq_min_mhz: f64,
    pub freq_max_mhz: f64,
    /// Idle power of one GPU, watts.
    pub p_idle: f64,
    /// Average per-GPU power at the highest frequency, watts.
    pub p_max: f64,
    #[serde(flatten)]
    pub hidden: PerfModel,
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<()> {
        self.hidden.validate()?;
        if self.bs_min == 0 || self.bs_min > self.bs_max {
            return Err(Error::input(format!("profile {}: bad batch size range", self.name)));
        }
        if !(self.freq_min_mhz > 0.0 && self.freq_min_mhz <= self.freq_max_mhz) {
            return Err(Error::input(format!("profile {}: bad frequency range", self.name)));
        }
        if !(self.p_idle >= 0.0 && self.p_idle < self.p_max) {
            return Err(Error::input(format!("profile {}: need 0 <= p_idle < p_max", self.name)));
        }
        Ok(())
    }

    pub fn accepts_local_bs(&self, bs: u32) -> bool {
        (self.bs_min..=self.bs_max).contains(&bs)
    }

    fn check_domain(&self, config: &Config) -> Result<()> {
        config.validate()?;
        if !self.accepts_local_bs(config.local_bs) {
            return Err(Error::input(format!(
                "{}: local batch size {} outside {}..={}",
                self.name, config.local_bs, self.bs_min, self.bs_max
            )));
        }
        let f = config.freq_mhz;
        if f < self.freq_min_mhz - 1e-9 || f > self.freq_max_mhz + 1e-9 {
            return Err(Error::input(format!(
                "{}: frequency {f} MHz outside {}..={}",
                self.name, self.freq_min_mhz, self.freq_max_mhz
            )));
        }
        Ok(())
    }

    /// Measured job power (watts, all GPUs) at a configuration.
    pub fn job_power(&self, config: &Config) -> Result<f64> {
        self.check_domain(config)?;
        Ok(self.hidden.predict_unchecked(config).power)
    }
}

/// Noise-free step time (s) and energy per iteration (J) of `config`.
pub fn ground_truth_perf(profile: &HardwareProfile, config: &Config) -> Result<(f64, f64)> {
    profile.check_domain(config)?;
    let p = profile.hidden.predict_unchecked(config);
    Ok((p.step_time.total, p.energy_per_iter))
}

/// `count` measurements of `config`, each scaled by an independent uniform
/// factor in `[1 - noise_rel, 1 + noise_rel]`.
pub fn sample_profile(
    profile: &HardwareProfile,
    config: &Config,
    count: usize,
    noise_rel: f64,
    seed: u64,
) -> Result<Vec<PerfSample>> {
    if count == 0 {
        return Err(Error::input("sample count must be at least 1"));
    }
    if !(0.0..1.0).contains(&noise_rel) {
        return Err(Error::input(format!("noise {noise_rel} must lie in [0, 1)")));
    }
    let (t, e) = ground_truth_perf(profile, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = || {
        if noise_rel == 0.0 {
            1.0
        } else {
            1.0 + rng.gen_range(-noise_rel..=noise_rel)
        }
    };
    Ok((0..count)
        .map(|_| PerfSample {
            config: *config,
            step_time: t * jitter(),
            energy_per_iter: e * jitter(),
        })
        .collect())
}

/// Human-scale description of a profile, turned into model coefficients by
/// [`Design::build`]. Times and powers are given at `bs_ref` and the maximum
/// frequency.
#[derive(Debug, Clone, Copy)]
struct Design {
    name: &'static str,
    bs: (u32, u32),
    bs_ref: u32,
    /// Gradient time at `bs_ref`, seconds.
    grad_time: f64,
    /// Share of the per-sample gradient time that scales with 1/f.
    grad_freq_share: f64,
    grad_const: f64,
    io_const: f64,
    io_per_sample: f64,
    /// Local sync: (time at n = 2, added time per extra GPU).
    sync_local: (f64, f64),
    sync_node: (f64, f64),
    sync_freq_share: f64,
    gammas: (f64, f64),
    f0: f64,
    /// Gradient power at (f_min, f0, f_max) for `bs_ref`, watts.
    grad_power: (f64, f64, f64),
    /// Slope of the batch factor in ln(bs + 1).
    batch_slope: f64,
    sync_power: (f64, f64, f64),
    static_low: f64,
    p_idle: f64,
}

fn linear_through(f_lo: f64, p_lo: f64, f_hi: f64, p_hi: f64) -> LinearPower {
    let a = (p_hi - p_lo) / (f_hi - f_lo);
    LinearPower { a, b: p_lo - a * f_lo }
}

/// `a·f³ + d` through (f0, p0) and (f_max, p_max).
fn cubic_through(f0: f64, p0: f64, f_max: f64, p_max: f64) -> CubicPower {
    let a = (p_max - p0) / (f_max.powi(3) - f0.powi(3));
    CubicPower { a, b: 0.0, c: 0.0, d: p0 - a * f0.powi(3) }
}

impl Design {
    fn build(&self) -> HardwareProfile {
        let fmax = FIXTURE_FREQ_MHZ;
        let fmin = FIXTURE_FREQ_MIN_MHZ;
        let bs_ref = f64::from(self.bs_ref);
        let per_sample = (self.grad_time - self.grad_const) / bs_ref;
        let sync = |(s2, per_gpu): (f64, f64)| SyncParams {
            alpha: self.sync_freq_share * s2 * fmax,
            theta: (1.0 - self.sync_freq_share) * s2,
            kappa: self.sync_freq_share * per_gpu * fmax,
            beta: (1.0 - self.sync_freq_share) * per_gpu,
        };
        let throughput = ThroughputParams {
            io_alpha: self.io_const,
            io_beta: self.io_per_sample,
            grad_alpha: self.grad_const,
            grad_beta: (1.0 - self.grad_freq_share) * per_sample,
            grad_kappa: self.grad_freq_share * per_sample * fmax,
            sync_local: sync(self.sync_local),
            sync_node: sync(self.sync_node),
            gamma1: self.gammas.0,
            gamma2: self.gammas.1,
        };
        let alpha = self.batch_slope;
        let beta = 1.0 - alpha * (bs_ref + 1.0).ln();
        let (g_lo, g_mid, g_hi) = self.grad_power;
        let (s_lo, s_mid, s_hi) = self.sync_power;
        let energy = EnergyParams {
            f0: self.f0,
            grad_low: GradPower { kappa: linear_through(fmin, g_lo, self.f0, g_mid), alpha, beta, theta: 1.0 },
            grad_high: GradPower { kappa: cubic_through(self.f0, g_mid, fmax, g_hi), alpha, beta, theta: 1.0 },
            sync_low: linear_through(fmin, s_lo, self.f0, s_mid),
            sync_high: cubic_through(self.f0, s_mid, fmax, s_hi),
            p_static_low: self.static_low,
            c_h: self.static_low / self.f0,
        };
        let mut profile = HardwareProfile {
            name: self.name.to_string(),
            bs_min: self.bs.0,
            bs_max: self.bs.1,
            freq_min_mhz: fmin,
            freq_max_mhz: fmax,
            p_idle: self.p_idle,
            p_max: 0.0,
            hidden: PerfModel { throughput, energy },
        };
        let probe = Config { n: 1, local_bs: self.bs_ref, freq_mhz: fmax, gpus_per_node_used: 1 };
        profile.p_max = profile.hidden.predict_unchecked(&probe).power;
        profile
    }
}

/// Solves `g(x) = target` for increasing `g` on `[lo, hi]`.
fn bisect(mut lo: f64, mut hi: f64, target: f64, g: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn perf_at(d: &Design, n: u32, global_bs: u32) -> (f64, f64) {
    let c = Config::new(n, global_bs, FIXTURE_FREQ_MHZ, n).expect("fixture config");
    let p = d.build().hidden.predict_unchecked(&c);
    (p.step_time.total, p.energy_per_iter)
}

/// Scales `d` so that `n = 1` and `n = 2` at global batch 64 hit the vgg16 points.
fn calibrate_vgg16(mut d: Design) -> Design {
    let [(_, t1, e1), (_, t2, e2)] = VGG16_FIXTURE_POINTS;
    d.grad_time = bisect(d.grad_const, 1.0, t1, |x| perf_at(&Design { grad_time: x, ..d }, 1, 64).0);
    let s2 = bisect(0.0, 1.0, t2, |x| {
        perf_at(&Design { sync_local: (x, d.sync_local.1), ..d }, 2, 64).0
    });
    d.sync_local.0 = s2;
    let k = bisect(0.0, 10.0, e1, |x| {
        let (a, b, c) = d.grad_power;
        perf_at(&Design { grad_power: (a * x, b * x, c * x), ..d }, 1, 64).1
    });
    d.grad_power = (d.grad_power.0 * k, d.grad_power.1 * k, d.grad_power.2 * k);
    let k = bisect(0.0, 10.0, e2, |x| {
        let (a, b, c) = d.sync_power;
        perf_at(&Design { sync_power: (a * x, b * x, c * x), ..d }, 2, 64).1
    });
    d.sync_power = (d.sync_power.0 * k, d.sync_power.1 * k, d.sync_power.2 * k);
    d
}

/// Scales sync time and sync power so two GPUs at global batch 32 hit the gpt2 point.
fn calibrate_gpt2(mut d: Design) -> Design {
    let (n, t, e) = GPT2_FIXTURE_POINT;
    d.sync_local.0 = bisect(0.0, 1.0, t, |x| {
        perf_at(&Design { sync_local: (x, d.sync_local.1), ..d }, n, 32).0
    });
    let k = bisect(0.0, 10.0, e, |x| {
        let (a, b, c) = d.sync_power;
        perf_at(&Design { sync_power: (a * x, b * x, c * x), ..d }, n, 32).1
    });
    d.sync_power = (d.sync_power.0 * k, d.sync_power.1 * k, d.sync_power.2 * k);
    d
}

const RESNET18: Design = Design {
    name: "resnet18",
    bs: (32, 512),
    bs_ref: 128,
    grad_time: 0.150,
    grad_freq_share: 0.55,
    grad_const: 0.004,
    io_const: 0.002,
    io_per_sample: 6e-5,
    sync_local: (0.012, 0.003),
    sync_node: (0.030, 0.006),
    sync_freq_share: 0.3,
    gammas: (3.0, 1.8),
    f0: 1010.0,
    grad_power: (70.0, 115.0, 230.0),
    batch_slope: 0.18,
    sync_power: (45.0, 70.0, 120.0),
    static_low: 40.0,
    p_idle: FIXTURE_IDLE_W,
};

const VGG16: Design = Design {
    name: "vgg16",
    bs: (32, 512),
    bs_ref: 64,
    grad_time: 0.180,
    grad_freq_share: 0.6,
    grad_const: 0.003,
    io_const: 0.002,
    io_per_sample: 4e-5,
    sync_local: (0.035, 0.008),
    sync_node: (0.080, 0.015),
    sync_freq_share: 0.3,
    gammas: (4.0, 1.4),
    f0: 1010.0,
    grad_power: (80.0, 130.0, 260.0),
    batch_slope: 0.2,
    sync_power: (50.0, 75.0, 125.0),
    static_low: 42.0,
    p_idle: FIXTURE_IDLE_W,
};

const INCEPTION_V3: Design = Design {
    name: "inception_v3",
    bs: (16, 512),
    bs_ref: 64,
    grad_time: 0.210,
    grad_freq_share: 0.5,
    grad_const: 0.005,
    io_const: 0.003,
    io_per_sample: 7e-5,
    sync_local: (0.020, 0.004),
    sync_node: (0.045, 0.009),
    sync_freq_share: 0.3,
    gammas: (2.5, 2.0),
    f0: 910.0,
    grad_power: (75.0, 110.0, 240.0),
    batch_slope: 0.17,
    sync_power: (45.0, 65.0, 115.0),
    static_low: 38.0,
    p_idle: FIXTURE_IDLE_W,
};

const GPT2: Design = Design {
    name: "gpt2",
    bs: (8, 128),
    bs_ref: 32,
    grad_time: 0.140,
    grad_freq_share: 0.55,
    grad_const: 0.006,
    io_const: 0.001,
    io_per_sample: 2e-5,
    sync_local: (0.050, 0.012),
    sync_node: (0.110, 0.025),
    sync_freq_share: 0.25,
    gammas: (2.0, 1.3),
    f0: 1010.0,
    grad_power: (85.0, 135.0, 250.0),
    batch_slope: 0.2,
    sync_power: (55.0, 80.0, 130.0),
    static_low: 40.0,
    p_idle: FIXTURE_IDLE_W,
};

const DEEPSPEECH2: Design = Design {
    name: "deepspeech2",
    bs: (8, 256),
    bs_ref: 32,
    grad_time: 0.260,
    grad_freq_share: 0.5,
    grad_const: 0.008,
    io_const: 0.004,
    io_per_sample: 1.2e-4,
    sync_local: (0.030, 0.006),
    sync_node: (0.070, 0.012),
    sync_freq_share: 0.3,
    gammas: (2.2, 1.7),
    f0: 1110.0,
    grad_power: (70.0, 125.0, 235.0),
    batch_slope: 0.16,
    sync_power: (40.0, 70.0, 110.0),
    static_low: 39.0,
    p_idle: FIXTURE_IDLE_W,
};

const VGG16_FIXTURE: Design = Design { name: "vgg16-fixture", ..VGG16 };

/// The five evaluation models plus `vgg16-fixture`.
pub fn builtin_profiles() -> Vec<HardwareProfile> {
    vec![
        RESNET18.build(),
        VGG16.build(),
        INCEPTION_V3.build(),
        calibrate_gpt2(GPT2).build(),
        DEEPSPEECH2.build(),
        calibrate_vgg16(VGG16_FIXTURE).build(),
    ]
}

pub fn builtin_profile(name: &str) -> Option<HardwareProfile> {
    builtin_profiles().into_iter().find(|p| p.name == name)
}

/// Profiles addressable by name: the builtins plus any user-supplied ones.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    by_name: BTreeMap<String, HardwareProfile>,
}

impl ProfileSet {
    pub fn builtin() -> Self {
        ProfileSet { by_name: builtin_profiles().into_iter().map(|p| (p.name.clone(), p)).collect() }
    }

    /// Adds or replaces a profile after validating it.
    pub fn insert(&mut self, profile: HardwareProfile) -> Result<()> {
        profile.validate()?;
        self.by_name.insert(profile.name.clone(), profile);
        Ok(())
    }

    /// Loads a JSON array of profiles.
    pub fn extend_from_json_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        let profiles: Vec<HardwareProfile> = serde_json::from_str(&text)?;
        for p in profiles {
            self.insert(p)?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&HardwareProfile> {
        self.by_name.get(name).ok_or_else(|| Error::input(format!("unknown model {name:?}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }
}

impl Default for ProfileSet {
    fn default() -> Self {
        Self::builtin()
    }
}
