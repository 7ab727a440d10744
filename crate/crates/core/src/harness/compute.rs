use serde::{Deserialize, Serialize};

use crate::model::ModelProfile;

/// Per-device compute rate.
///
/// One sample of a model with `n` gradient elements costs `n^work_exponent`
/// work units; `t_comp = b * work / throughput`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeProfile {
    pub throughput: f64,
    pub work_exponent: f64,
    /// Bytes per second for one staging copy of the packed gradient buffer.
    pub copy_rate_bytes_s: f64,
    /// Fixed cost of entering one collective call.
    pub invocation_overhead_s: f64,
}

impl ComputeProfile {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.throughput > 0.0 && self.throughput.is_finite()) {
            return Err(format!(
                "throughput must be positive, got {}",
                self.throughput
            ));
        }
        if !(self.work_exponent > 0.0) {
            return Err(format!(
                "work_exponent must be positive, got {}",
                self.work_exponent
            ));
        }
        if !(self.copy_rate_bytes_s > 0.0) {
            return Err(format!(
                "copy_rate_bytes_s must be positive, got {}",
                self.copy_rate_bytes_s
            ));
        }
        if !(self.invocation_overhead_s >= 0.0 && self.invocation_overhead_s.is_finite()) {
            return Err(format!(
                "invocation_overhead_s must be >= 0, got {}",
                self.invocation_overhead_s
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let p: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        p.validate()?;
        Ok(p)
    }

    pub fn work_per_sample(&self, elems: usize) -> f64 {
        (elems as f64).powf(self.work_exponent)
    }

    pub fn t_comp_elems(&self, elems: usize, batch: usize) -> f64 {
        batch as f64 * self.work_per_sample(elems) / self.throughput
    }

    pub fn t_comp(&self, model: &ModelProfile, batch: usize) -> f64 {
        self.t_comp_elems(model.total_elems(), batch)
    }

    /// Pack plus unpack of `bytes`.
    pub fn copy_time(&self, bytes: usize) -> f64 {
        2.0 * bytes as f64 / self.copy_rate_bytes_s
    }

    pub fn with_throughput(mut self, throughput: f64) -> Self {
        self.throughput = throughput;
        self
    }

    pub fn with_overhead(mut self, secs: f64) -> Self {
        self.invocation_overhead_s = secs;
        self
    }
}
