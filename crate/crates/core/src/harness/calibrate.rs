use serde::{Deserialize, Serialize};

use super::reference::{
    CLUSTER_SIZE, COLLECTIVE_ANCHOR_BYTES, FIXED_GLOBAL_BATCH, INCEPTION_V3_CHUNKWISE_S,
    WIFI_SLOWDOWN,
};
use super::{comm_time, CommModel, ComputeProfile, HarnessError};
use crate::collectives::Algorithm;
use crate::engine::Aggregation;
use crate::model::{build_profile, ModelProfile};
use crate::transport::NetProfile;

/// Root of an increasing function on `[lo, hi]`.
///
/// With `log_scale` the bracket is halved geometrically, for parameters
/// spanning many decades.
pub fn bisect(
    mut f: impl FnMut(f64) -> Result<f64, HarnessError>,
    mut lo: f64,
    mut hi: f64,
    log_scale: bool,
) -> Result<f64, HarnessError> {
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(HarnessError::Calibration(format!(
            "target not bracketed by [{lo}, {hi}] (f = {f_lo}, {f_hi})"
        )));
    }
    for _ in 0..200 {
        let mid = if log_scale {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if mid <= lo || mid >= hi || (hi - lo) <= 1e-13 * hi.abs().max(1e-300) {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Time ratio of an allreduce of `bytes` on `k_to` versus `k_from` ranks.
pub fn slowdown(
    net: &NetProfile,
    alg: Algorithm,
    bytes: usize,
    k_from: usize,
    k_to: usize,
) -> Result<f64, HarnessError> {
    let n = bytes / 4;
    let a = CommModel::new(net, k_from).allreduce_time(alg, n)?;
    let b = CommModel::new(net, k_to).allreduce_time(alg, n)?;
    if a <= 0.0 {
        return Err(HarnessError::Invalid(
            "baseline allreduce takes no time".into(),
        ));
    }
    Ok(b / a)
}

/// Contention coefficient at which the 37.5 MB tree allreduce on `net`
/// slows down by `target` from 2 to 16 ranks.
pub fn fit_contention(net: &NetProfile, target: f64) -> Result<f64, HarnessError> {
    bisect(
        |c| {
            Ok(slowdown(
                &net.clone().with_contention(c),
                Algorithm::Tree,
                COLLECTIVE_ANCHOR_BYTES,
                2,
                16,
            )? - target)
        },
        0.0,
        1000.0,
        false,
    )
}

/// Per-invocation overhead at which chunk-wise ring aggregation of `model`
/// on `k` ranks takes `target_s`.
pub fn fit_invocation_overhead(
    model: &ModelProfile,
    k: usize,
    net: &NetProfile,
    compute: &ComputeProfile,
    target_s: f64,
) -> Result<f64, HarnessError> {
    let mut comm = CommModel::new(net, k);
    bisect(
        |o| {
            Ok(comm_time(
                model,
                Aggregation::RingChunkwise,
                &compute.clone().with_overhead(o),
                &mut comm,
            )? - target_s)
        },
        0.0,
        target_s,
        false,
    )
}

/// Iteration time of the fixed-batch scaling run at `k` ranks.
pub fn fixed_batch_total(
    model: &ModelProfile,
    k: usize,
    net: &NetProfile,
    compute: &ComputeProfile,
    aggregation: Aggregation,
) -> Result<f64, HarnessError> {
    let b = FIXED_GLOBAL_BATCH / k;
    let mut comm = CommModel::new(net, k);
    Ok(compute.t_comp(model, b) + comm_time(model, aggregation, compute, &mut comm)?)
}

/// Throughput that makes 16 ranks the fastest fixed-batch configuration:
/// the geometric mean of the throughputs at which 16 ranks tie with 8 and
/// 32 ranks tie with 16.
pub fn fit_throughput(
    model: &ModelProfile,
    net: &NetProfile,
    compute: &ComputeProfile,
    aggregation: Aggregation,
) -> Result<f64, HarnessError> {
    let crossing = |small: usize, large: usize| {
        bisect(
            |theta| {
                let c = compute.clone().with_throughput(theta);
                Ok(fixed_batch_total(model, large, net, &c, aggregation)?
                    - fixed_batch_total(model, small, net, &c, aggregation)?)
            },
            1e-3,
            1e15,
            true,
        )
    };
    // faster devices favour fewer ranks, so the 16/32 tie is the lower bound
    let low = crossing(16, 32)?;
    let high = crossing(8, 16)?;
    if low >= high {
        return Err(HarnessError::Calibration(format!(
            "no throughput makes 16 ranks optimal (crossings {low} and {high})"
        )));
    }
    Ok((low * high).sqrt())
}

/// Throughput at which one unthrottled iteration of `model` with `batch`
/// samples takes `target_s`.
pub fn throughput_for_compute_time(
    model: &ModelProfile,
    batch: usize,
    compute: &ComputeProfile,
    target_s: f64,
) -> f64 {
    batch as f64 * compute.work_per_sample(model.total_elems()) / target_s
}

/// The three fitted constants, each from a single target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub contention_coeff: f64,
    pub invocation_overhead_s: f64,
    pub throughput: f64,
}

/// Fits contention on `wifi`, then the invocation overhead on Inception-v3
/// over `ethernet`, then throughput on the GoogleNet fixed-batch run.
pub fn calibrate_all(
    ethernet: &NetProfile,
    wifi: &NetProfile,
    compute: &ComputeProfile,
    scaling_aggregation: Aggregation,
) -> Result<Calibration, HarnessError> {
    let contention_coeff = fit_contention(wifi, WIFI_SLOWDOWN)?;
    let inception =
        build_profile("Inception-v3").map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let invocation_overhead_s = fit_invocation_overhead(
        &inception,
        CLUSTER_SIZE,
        ethernet,
        compute,
        INCEPTION_V3_CHUNKWISE_S,
    )?;
    let googlenet = build_profile("GoogleNet").map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let with_overhead = compute.clone().with_overhead(invocation_overhead_s);
    let throughput = fit_throughput(&googlenet, ethernet, &with_overhead, scaling_aggregation)?;
    Ok(Calibration {
        contention_coeff,
        invocation_overhead_s,
        throughput,
    })
}
