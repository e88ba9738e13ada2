use std::io::Write;

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionPhase {
    Gpu,
    Frequency,
}

/// One committed greedy step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub time_s: f64,
    pub job_id: String,
    pub phase: DecisionPhase,
    pub old_n: u32,
    pub new_n: u32,
    pub old_f_mhz: f64,
    pub new_f_mhz: f64,
    /// Projected total power after the step, watts.
    pub projected_power_w: f64,
}

/// Append-only record of scheduler decisions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionLog {
    pub records: Vec<Decision>,
}

impl DecisionLog {
    pub fn push(&mut self, d: Decision) {
        self.records.push(d);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.records.is_empty() {
            w.write_record([
                "time_s",
                "job_id",
                "phase",
                "old_n",
                "new_n",
                "old_f_mhz",
                "new_f_mhz",
                "projected_power_w",
            ])?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}
