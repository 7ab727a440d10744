use super::calibrate::throughput_for_compute_time;
use super::reference::{
    COLLECTIVE_ANCHOR_BYTES, ETHERNET_SLOWDOWN_LIMIT, INCEPTION_V3_CHUNKWISE_S,
    RESNET50_CHUNKWISE_S, WIFI_SLOWDOWN,
};
use super::report::{ExperimentReport, ReportRow};
use super::{
    comm_time, simulate_iteration, CommModel, ComputeProfile, HarnessError, ThermalPreset,
};
use crate::collectives::Algorithm;
use crate::engine::Aggregation;
use crate::model::{build_profile, ModelProfile, BYTES_PER_MB};
use crate::transport::NetProfile;

fn profile_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Invalid(e.to_string())
}

fn size_label(bytes: usize) -> String {
    format!("{}MB", bytes as f64 / BYTES_PER_MB)
}

/// Fixed global batch spread over a growing number of ranks.
pub fn run_scaling_experiment(
    model: &ModelProfile,
    global_batch: usize,
    k_list: &[usize],
    compute: &ComputeProfile,
    net: &NetProfile,
    aggregation: Aggregation,
) -> Result<ExperimentReport, HarnessError> {
    if k_list.is_empty() {
        return Err(HarnessError::Invalid("no worker counts given".into()));
    }
    if let Some(&k) = k_list
        .iter()
        .find(|&&k| k == 0 || !global_batch.is_multiple_of(k))
    {
        return Err(HarnessError::Invalid(format!(
            "global batch {global_batch} is not divisible by K={k}"
        )));
    }
    let mut ks = k_list.to_vec();
    ks.sort_unstable();
    ks.dedup();

    let mut rep = ExperimentReport::new("scaling", net.seed);
    rep.profile("net", net);
    rep.profile("compute", compute);
    rep.parameter("global_batch", global_batch);
    rep.parameter("aggregation", aggregation.name());
    for &k in &ks {
        let mut comm = CommModel::new(net, k);
        let m = simulate_iteration(
            model,
            global_batch / k,
            compute,
            None,
            &mut comm,
            aggregation,
            0,
        )?;
        rep.rows.push(ReportRow::sim(
            "scaling",
            &model.name,
            k,
            aggregation.name(),
            m.t_comp,
            m.t_comm,
        ));
    }

    let rows = rep.rows.clone();
    let mut halves = true;
    let mut detail = String::new();
    for w in rows.windows(2) {
        if w[1].k == 2 * w[0].k {
            let ratio = w[1].t_comp_s / (w[0].t_comp_s / 2.0);
            if (ratio - 1.0).abs() > 0.05 {
                halves = false;
                detail = format!("K={}: t_comp ratio {ratio}", w[1].k);
            }
        }
    }
    rep.check("t_comp halves per doubling", halves, detail);
    let monotone = rows.windows(2).all(|w| w[1].t_comm_s >= w[0].t_comm_s);
    rep.check("t_comm non-decreasing in K", monotone, "");
    if let (Some(a), Some(b)) = (
        rows.iter().find(|r| r.k == 16),
        rows.iter().find(|r| r.k == 32),
    ) {
        rep.derive("total_k16_s", a.t_total_s);
        rep.derive("total_k32_s", b.t_total_s);
        rep.check(
            "total(K=32) > total(K=16)",
            b.t_total_s > a.t_total_s,
            format!("{} vs {}", b.t_total_s, a.t_total_s),
        );
    }
    Ok(rep)
}

/// Allreduce time over every combination of size, group size, network and algorithm.
pub fn run_collective_bench(
    sizes_bytes: &[usize],
    k_list: &[usize],
    nets: &[(String, NetProfile)],
    algs: &[Algorithm],
) -> Result<ExperimentReport, HarnessError> {
    if !sizes_bytes.contains(&COLLECTIVE_ANCHOR_BYTES) {
        return Err(HarnessError::Invalid(format!(
            "sizes must include the {} anchor",
            size_label(COLLECTIVE_ANCHOR_BYTES)
        )));
    }
    let mut rep = ExperimentReport::new("collective", nets.first().map_or(0, |(_, n)| n.seed));
    for (name, net) in nets {
        rep.profile(name, net);
    }
    rep.parameter("sizes_bytes", sizes_bytes);
    for (name, net) in nets {
        for &alg in algs {
            for &bytes in sizes_bytes {
                for &k in k_list {
                    let t = CommModel::new(net, k).allreduce_time(alg, bytes / 4)?;
                    let label = format!("{name}:{}", size_label(bytes));
                    rep.rows
                        .push(ReportRow::sim("collective", &label, k, alg.name(), 0.0, t));
                }
            }
        }
    }

    if k_list.contains(&2) && k_list.contains(&16) {
        for (name, _) in nets {
            for &alg in algs {
                let label = format!("{name}:{}", size_label(COLLECTIVE_ANCHOR_BYTES));
                let (a, b) = (
                    rep.find(&label, 2, alg.name()).map(|r| r.t_comm_s),
                    rep.find(&label, 16, alg.name()).map(|r| r.t_comm_s),
                );
                if let (Some(a), Some(b)) = (a, b) {
                    let ratio = b / a;
                    rep.derive(&format!("slowdown_{name}_{alg}_k2_to_k16"), ratio);
                    if alg == Algorithm::Tree && name.starts_with("wifi") {
                        let ok = (ratio / WIFI_SLOWDOWN - 1.0).abs() <= 0.2;
                        rep.check(
                            &format!("{name} tree slowdown within 63x +-20%"),
                            ok,
                            format!("{ratio}"),
                        );
                    }
                    if alg == Algorithm::Tree && name.starts_with("ethernet") {
                        let ok = ratio <= ETHERNET_SLOWDOWN_LIMIT;
                        rep.check(
                            &format!("{name} tree slowdown <= 1.5x"),
                            ok,
                            format!("{ratio}"),
                        );
                    }
                }
            }
        }
    }
    Ok(rep)
}

/// Packed ring, packed tree and chunk-wise ring aggregation per model.
pub fn run_aggregation_comparison(
    models: &[ModelProfile],
    k: usize,
    net: &NetProfile,
    compute: &ComputeProfile,
) -> Result<ExperimentReport, HarnessError> {
    let mut rep = ExperimentReport::new("aggregation", net.seed);
    rep.profile("net", net);
    rep.profile("compute", compute);
    let mut comm = CommModel::new(net, k);
    let mut chunkwise_wins = Vec::new();
    for model in models {
        let t_comp = compute.t_comp(model, model.batch_per_device);
        let mut times = [0.0; 3];
        for (i, agg) in Aggregation::ALL.into_iter().enumerate() {
            times[i] = comm_time(model, agg, compute, &mut comm)?;
            rep.rows.push(ReportRow::sim(
                "aggregation",
                &model.name,
                k,
                agg.name(),
                t_comp,
                times[i],
            ));
        }
        let [ring_packed, _, chunkwise] = times;
        rep.derive(
            &format!("chunkwise_over_packed_{}", model.name),
            chunkwise / ring_packed,
        );
        if chunkwise < ring_packed {
            chunkwise_wins.push(model.name.clone());
        }
        if model.name == "AlexNet" {
            rep.check(
                "AlexNet chunk-wise <= 1.1 x packed",
                chunkwise <= 1.1 * ring_packed,
                format!("{chunkwise} vs {ring_packed}"),
            );
        }
    }
    rep.parameter("chunkwise_faster_than_packed", &chunkwise_wins);

    let chunk = |name: &str| {
        rep.find(name, k, Aggregation::RingChunkwise.name())
            .map(|r| r.t_comm_s)
    };
    if let (Some(inc), Some(res)) = (chunk("Inception-v3"), chunk("ResNet-50")) {
        let ratio = inc / res;
        let want = INCEPTION_V3_CHUNKWISE_S / RESNET50_CHUNKWISE_S;
        rep.derive("inception_v3_over_resnet50_chunkwise", ratio);
        rep.check(
            "Inception-v3:ResNet-50 chunk-wise ratio within 25% of 84:47",
            (ratio / want - 1.0).abs() <= 0.25,
            format!("{ratio} vs {want}"),
        );
    }
    Ok(rep)
}

/// Efficiency of every model at its own per-device batch on `k` ranks.
pub fn run_efficiency_sweep(
    models: &[ModelProfile],
    k: usize,
    net: &NetProfile,
    compute: &ComputeProfile,
    aggregation: Aggregation,
) -> Result<ExperimentReport, HarnessError> {
    let mut rep = ExperimentReport::new("efficiency", net.seed);
    rep.profile("net", net);
    rep.profile("compute", compute);
    rep.parameter("aggregation", aggregation.name());
    let mut comm = CommModel::new(net, k);
    for model in models {
        let m = simulate_iteration(
            model,
            model.batch_per_device,
            compute,
            None,
            &mut comm,
            aggregation,
            0,
        )?;
        let row = ReportRow::sim(
            "efficiency",
            &model.name,
            k,
            aggregation.name(),
            m.t_comp,
            m.t_comm,
        );
        rep.derive(&format!("efficiency_{}", model.name), row.efficiency);
        rep.rows.push(row);
    }
    let in_range = rep
        .rows
        .iter()
        .all(|r| r.efficiency > 0.0 && r.efficiency <= 1.0);
    rep.check("all efficiencies in (0, 1]", in_range, "");
    let by_eff = |rows: &[ReportRow], max: bool| {
        rows.iter()
            .max_by(|a, b| {
                let o = a.efficiency.total_cmp(&b.efficiency);
                if max {
                    o
                } else {
                    o.reverse()
                }
            })
            .map(|r| r.model.clone())
            .unwrap_or_default()
    };
    let best = by_eff(&rep.rows, true);
    let worst = by_eff(&rep.rows, false);
    if models.len() > 1 {
        if models.iter().any(|m| m.name == "SequeezeNet-v1.1") {
            rep.check(
                "SqueezeNet-v1.1 has the highest efficiency",
                best == "SequeezeNet-v1.1",
                best.clone(),
            );
        }
        if models.iter().any(|m| m.name == "ResNet-152") {
            rep.check(
                "ResNet-152 has the lowest efficiency",
                worst == "ResNet-152",
                worst.clone(),
            );
        }
    }
    Ok(rep)
}

/// Packed ring against packed tree for one model over several group sizes.
pub fn run_rar_vs_tree(
    model: &ModelProfile,
    k_list: &[usize],
    net: &NetProfile,
    compute: &ComputeProfile,
) -> Result<ExperimentReport, HarnessError> {
    let mut rep = ExperimentReport::new("rar-vs-tree", net.seed);
    rep.profile("net", net);
    rep.profile("compute", compute);
    let t_comp = compute.t_comp(model, model.batch_per_device);
    for &k in k_list {
        let mut comm = CommModel::new(net, k);
        let ring = comm_time(model, Aggregation::RingPacked, compute, &mut comm)?;
        let tree = comm_time(model, Aggregation::TreePacked, compute, &mut comm)?;
        rep.rows.push(ReportRow::sim(
            "rar-vs-tree",
            &model.name,
            k,
            "ring_packed",
            t_comp,
            ring,
        ));
        rep.rows.push(ReportRow::sim(
            "rar-vs-tree",
            &model.name,
            k,
            "tree_packed",
            t_comp,
            tree,
        ));
        let speedup = if ring > 0.0 { tree / ring } else { 1.0 };
        rep.derive(&format!("speedup_k{k}"), speedup);
        if k >= 3 {
            rep.check(
                &format!("ring faster than tree at K={k}, speedup in [1, 2]"),
                ring < tree && (1.0..=2.0).contains(&speedup),
                format!("{speedup}"),
            );
        }
    }
    Ok(rep)
}

/// One sample of the thermal time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalSample {
    pub iter: usize,
    pub time_s: f64,
    pub temp_c: f64,
    pub multiplier: f64,
    pub t_comp_s: f64,
}

/// Times at which per-iteration compute time rises, with the new level.
pub fn upward_steps(samples: &[ThermalSample]) -> Vec<(f64, f64)> {
    samples
        .windows(2)
        .filter(|w| w[1].t_comp_s > w[0].t_comp_s * (1.0 + 1e-9))
        .map(|w| (w[1].time_s, w[1].t_comp_s))
        .collect()
}

/// A single device training back to back until `duration_s`, heating while
/// it computes and cooling while idle.
pub fn thermal_series(
    preset: &ThermalPreset,
    compute: &ComputeProfile,
    fan_on: bool,
) -> Result<(ModelProfile, Vec<ThermalSample>), HarnessError> {
    preset.validate().map_err(HarnessError::Invalid)?;
    let model = build_profile(&preset.model).map_err(profile_err)?;
    let theta = throughput_for_compute_time(&model, preset.batch, compute, preset.base_t_comp_s);
    let compute = compute.clone().with_throughput(theta);
    let mut thermal = preset.model(fan_on).map_err(HarnessError::Invalid)?;
    let mut comm = CommModel::new(&NetProfile::ideal(), 1);
    let mut samples = Vec::new();
    let mut time = 0.0;
    let mut iter = 0;
    while time < preset.duration_s {
        let temp = thermal.temp;
        let multiplier = thermal.multiplier();
        let m = simulate_iteration(
            &model,
            preset.batch,
            &compute,
            Some(&mut thermal),
            &mut comm,
            Aggregation::RingPacked,
            iter,
        )?;
        thermal.run_idle(preset.idle_s);
        samples.push(ThermalSample {
            iter,
            time_s: time,
            temp_c: temp,
            multiplier,
            t_comp_s: m.t_comp,
        });
        time += m.t_comp + m.t_comm + preset.idle_s;
        iter += 1;
    }
    Ok((model, samples))
}

pub fn run_thermal_scenario(
    preset: &ThermalPreset,
    compute: &ComputeProfile,
    fan_on: bool,
) -> Result<ExperimentReport, HarnessError> {
    let (model, samples) = thermal_series(preset, compute, fan_on)?;
    let mut rep = ExperimentReport::new("thermal", 0);
    rep.profile("thermal", preset);
    rep.profile("compute", compute);
    rep.parameter("fan_on", fan_on);
    let alg = if fan_on { "fan" } else { "no_fan" };
    for s in &samples {
        rep.rows.push(ReportRow::sim(
            "thermal",
            &model.name,
            1,
            alg,
            s.t_comp_s,
            0.0,
        ));
    }
    rep.series = Some((
        "iter,time_s,temp_c,multiplier,t_comp_s".to_string(),
        samples
            .iter()
            .map(|s| {
                format!(
                    "{},{},{},{},{}",
                    s.iter, s.time_s, s.temp_c, s.multiplier, s.t_comp_s
                )
            })
            .collect(),
    ));

    let steps = upward_steps(&samples);
    for (i, (at, level)) in steps.iter().enumerate() {
        rep.derive(&format!("step{}_time_s", i + 1), *at);
        rep.derive(&format!("step{}_t_comp_s", i + 1), *level);
    }
    let top = preset.tiers.last().map_or(1.0, |t| t.multiplier);
    let reached_top = samples.iter().any(|s| s.multiplier >= top && top > 1.0);
    if fan_on {
        rep.check(
            "fan keeps the top throttle tier off",
            !reached_top,
            format!("{} steps", steps.len()),
        );
    } else {
        rep.check(
            "one upward step per throttle tier",
            steps.len() == preset.tiers.len(),
            format!("{} steps", steps.len()),
        );
    }
    Ok(rep)
}
