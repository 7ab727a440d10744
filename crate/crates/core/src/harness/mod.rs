//! Timing-only cluster simulator and the experiment drivers built on it.

pub mod calibrate;
mod compute;
mod des;
mod experiments;
pub mod reference;
mod report;
mod thermal;

use thiserror::Error;

pub use compute::ComputeProfile;
pub use des::{CommModel, Des};
pub use experiments::{
    run_aggregation_comparison, run_collective_bench, run_efficiency_sweep, run_rar_vs_tree,
    run_scaling_experiment, run_thermal_scenario, thermal_series, upward_steps, ThermalSample,
};
pub use report::{Check, ExperimentReport, ReportMeta, ReportRow, REPORT_HEADER};
pub use thermal::{ThermalModel, ThermalPreset, ThrottleTier};

use crate::engine::{Aggregation, IterationMetrics};
use crate::model::ModelProfile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("simulated link {from} -> {to} dropped")]
    Disconnected { from: usize, to: usize },
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
}

/// Communication time of one aggregation of `model` on `comm`'s group.
///
/// Packed strategies pay one invocation overhead, both staging copies and
/// one allreduce of the whole model; chunk-wise pays the overhead and an
/// allreduce per chunk.
pub fn comm_time(
    model: &ModelProfile,
    aggregation: Aggregation,
    compute: &ComputeProfile,
    comm: &mut CommModel,
) -> Result<f64, HarnessError> {
    if comm.size() <= 1 {
        return Ok(0.0);
    }
    let alg = aggregation.algorithm();
    let overhead = compute.invocation_overhead_s;
    if aggregation.is_packed() {
        let n = model.total_elems();
        Ok(overhead + compute.copy_time(n * 4) + comm.allreduce_time(alg, n)?)
    } else {
        let mut total = 0.0;
        for &n in &model.chunk_elems {
            total += overhead + comm.allreduce_time(alg, n)?;
        }
        Ok(total)
    }
}

/// One simulated training iteration on `K = comm.size()` identical devices.
///
/// Compute time is the profile's estimate scaled by the current throttle
/// multiplier; the device then heats for the compute phase and cools for
/// the communication phase.
pub fn simulate_iteration(
    model: &ModelProfile,
    batch: usize,
    compute: &ComputeProfile,
    thermal: Option<&mut ThermalModel>,
    comm: &mut CommModel,
    aggregation: Aggregation,
    iter: usize,
) -> Result<IterationMetrics, HarnessError> {
    if batch == 0 {
        return Err(HarnessError::Invalid(
            "per-device batch must be >= 1".into(),
        ));
    }
    let base = compute.t_comp(model, batch);
    let t_comm = comm_time(model, aggregation, compute, comm)?;
    let t_comp = match thermal {
        Some(th) => {
            let t = base * th.multiplier();
            th.run_busy(t);
            th.run_idle(t_comm);
            t
        }
        None => base,
    };
    Ok(IterationMetrics {
        iter,
        rank: 0,
        t_comp,
        t_comm,
        loss: 0.0,
        checksum: 0,
    })
}

pub fn efficiency(t_comp: f64, t_comm: f64) -> f64 {
    let total = t_comp + t_comm;
    if total > 0.0 {
        t_comp / total
    } else {
        1.0
    }
}
