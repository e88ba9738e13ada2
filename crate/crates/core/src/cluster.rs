//! Cluster topology, frequency set and the power budget.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported frequencies used when a cluster file does not list any.
pub const DEFAULT_FREQUENCIES_MHZ: [f64; 10] =
    [510.0, 610.0, 710.0, 810.0, 910.0, 1010.0, 1110.0, 1210.0, 1310.0, 1410.0];

fn default_frequencies() -> Vec<f64> {
    DEFAULT_FREQUENCIES_MHZ.to_vec()
}
fn default_eta() -> f64 {
    0.8
}
fn default_p_max() -> f64 {
    300.0
}
fn default_p_idle() -> f64 {
    50.0
}
fn default_migration_delay() -> f64 {
    30.0
}
fn default_prerun() -> f64 {
    240.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub num_nodes: u32,
    pub gpus_per_node: u32,
    /// Ascending, MHz.
    #[serde(default = "default_frequencies")]
    pub supported_frequencies: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Average per-GPU power at the highest frequency, watts.
    #[serde(default = "default_p_max")]
    pub p_max: f64,
    /// Idle power of a powered-on GPU, watts.
    #[serde(default = "default_p_idle")]
    pub p_idle: f64,
    #[serde(default = "default_migration_delay")]
    pub migration_delay_s: f64,
    #[serde(default = "default_prerun")]
    pub prerun_s: f64,
}

impl ClusterSpec {
    /// A cluster with the default frequency set, η = 0.8, 300 W P_max and 50 W idle power.
    pub fn new(num_nodes: u32, gpus_per_node: u32) -> Self {
        ClusterSpec {
            num_nodes,
            gpus_per_node,
            supported_frequencies: default_frequencies(),
            eta: default_eta(),
            p_max: default_p_max(),
            p_idle: default_p_idle(),
            migration_delay_s: default_migration_delay(),
            prerun_s: default_prerun(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 {
            return Err(Error::input("cluster needs at least one node"));
        }
        if !self.gpus_per_node.is_power_of_two() {
            return Err(Error::input(format!(
                "gpus_per_node {} must be a power of two",
                self.gpus_per_node
            )));
        }
        let fs = &self.supported_frequencies;
        if fs.is_empty() || fs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::input("supported_frequencies must be non-empty and positive"));
        }
        if fs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input("supported_frequencies must be strictly ascending"));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(Error::input(format!("eta {} must lie in [0, 1)", self.eta)));
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(Error::input("p_max must be positive"));
        }
        if !(self.p_idle.is_finite() && self.p_idle >= 0.0) {
            return Err(Error::input("p_idle must be non-negative"));
        }
        for (name, v) in [("migration_delay_s", self.migration_delay_s), ("prerun_s", self.prerun_s)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::input(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn total_gpus(&self) -> u32 {
        self.num_nodes * self.gpus_per_node
    }

    pub fn f_min(&self) -> f64 {
        self.supported_frequencies[0]
    }

    pub fn f_max(&self) -> f64 {
        *self.supported_frequencies.last().expect("validated non-empty")
    }

    pub fn budget(&self) -> PowerBudget {
        PowerBudget::new(self.eta, self.total_gpus(), self.p_max)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: ClusterSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    pub eta: f64,
    pub gpus: u32,
    pub p_max: f64,
    /// `eta * gpus * p_max`, watts.
    pub power_limit: f64,
}

impl PowerBudget {
    pub fn new(eta: f64, gpus: u32, p_max: f64) -> Self {
        PowerBudget { eta, gpus, p_max, power_limit: eta * f64::from(gpus) * p_max }
    }

    /// No limit at all, for policies that ignore power.
    pub fn unlimited(gpus: u32) -> Self {
        PowerBudget { eta: f64::INFINITY, gpus, p_max: f64::INFINITY, power_limit: f64::INFINITY }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limit_is_product() {
        let b = ClusterSpec::new(4, 8).budget();
        assert_eq!(b.power_limit, 0.8 * 32.0 * 300.0);
        assert_eq!(b.gpus, 32);
    }

    #[test]
    fn rejects_bad_specs() {
        let ok = ClusterSpec::new(2, 4);
        ok.validate().unwrap();
        for bad in [
            ClusterSpec { gpus_per_node: 6, ..ok.clone() },
            ClusterSpec { num_nodes: 0, ..ok.clone() },
            ClusterSpec { eta: 1.0, ..ok.clone() },
            ClusterSpec { eta: -0.1, ..ok.clone() },
            ClusterSpec { supported_frequencies: vec![], ..ok.clone() },
            ClusterSpec { supported_frequencies: vec![900.0, 800.0], ..ok.clone() },
            ClusterSpec { prerun_s: -1.0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn json_defaults() {
        let s: ClusterSpec = serde_json::from_str(
            r#"{"num_nodes":1,"gpus_per_node":2,"eta":0.5,"p_max":250,"p_idle":50}"#,
        )
        .unwrap();
        assert_eq!(s.supported_frequencies, DEFAULT_FREQUENCIES_MHZ.to_vec());
        assert_eq!((s.migration_delay_s, s.prerun_s), (30.0, 240.0));
    }
}
