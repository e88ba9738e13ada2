pub mod baselines;
pub mod cluster;
pub mod error;
pub mod job;
pub(crate) mod lsq;
pub mod oracle;
pub mod perf_model;
pub mod placement;
pub mod scalar;
pub mod scheduler;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};

pub type ConfigF32 = perf_model::Config<f32>;
pub type ConfigF64 = perf_model::Config<f64>;
pub type PerfModelF32 = perf_model::PerfModel<f32>;
pub type PerfModelF64 = perf_model::PerfModel<f64>;
