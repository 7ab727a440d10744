//! Acceptance suite. Prints one line per criterion and exits nonzero if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringtrain_core::collectives::{Algorithm, CommGroup};
use ringtrain_core::engine::{
    run_local_sim, run_local_tcp, shard_batch, Aggregation, Dataset, TrainingConfig,
};
use ringtrain_core::harness::calibrate::{
    fit_contention, fit_invocation_overhead, fit_throughput, slowdown,
};
use ringtrain_core::harness::reference::*;
use ringtrain_core::harness::{
    comm_time, run_efficiency_sweep, run_rar_vs_tree, run_scaling_experiment, thermal_series,
    CommModel,
};
use ringtrain_core::model::{all_profiles, build_profile, RealModel, Tensor};
use ringtrain_core::presets;
use ringtrain_core::transport::{Instrumented, NetProfile, SimNetwork, TcpOptions};

type Outcome = Result<String, String>;

/// Name, runtime limit in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

// 1 ------------------------------------------------------------------------

fn quiet_net() -> NetProfile {
    NetProfile {
        jitter_frac: 0.0,
        contention_coeff: 0.0,
        disconnect_prob: 0.0,
        ..presets::ethernet()
    }
}

/// Allreduces `inputs` (one vector per rank); returns the results and the sends per rank.
fn allreduce_group(alg: Algorithm, inputs: &[Vec<f32>]) -> Vec<(Vec<f32>, usize)> {
    let handles: Vec<_> = SimNetwork::group(&quiet_net(), inputs.len())
        .into_iter()
        .zip(inputs.iter().cloned())
        .map(|(t, mut data)| {
            thread::spawn(move || {
                let mut g = CommGroup::new(Instrumented::new(t));
                g.allreduce(alg, &mut data).expect("allreduce");
                (data, g.into_inner().sends())
            })
        })
        .collect();
    handles
        .into_iter()
        .map(|h| h.join().expect("rank thread"))
        .collect()
}

fn collective_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut cases = 0;
    let mut worst_rel = 0.0f64;
    for k in 1..=8usize {
        let mut sizes = vec![1, k.saturating_sub(1), k, k + 1, 1000];
        sizes.sort_unstable();
        sizes.dedup();
        for n in sizes {
            let ints: Vec<Vec<f32>> = (0..k)
                .map(|_| {
                    (0..n)
                        .map(|_| rng.random_range(-1000i32..=1000) as f32)
                        .collect()
                })
                .collect();
            let floats: Vec<Vec<f32>> = (0..k)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect())
                .collect();
            let int_sum: Vec<f32> = (0..n)
                .map(|i| ints.iter().map(|v| v[i] as i64).sum::<i64>() as f32)
                .collect();
            let float_sum: Vec<f64> = (0..n)
                .map(|i| floats.iter().map(|v| f64::from(v[i])).sum())
                .collect();
            let magnitude: Vec<f64> = (0..n)
                .map(|i| floats.iter().map(|v| f64::from(v[i]).abs()).sum())
                .collect();

            for alg in [Algorithm::Ring, Algorithm::Tree] {
                for (rank, (got, sends)) in allreduce_group(alg, &ints).into_iter().enumerate() {
                    ensure(
                        got == int_sum,
                        format!("{alg} k={k} n={n} rank {rank}: integer sum differs"),
                    )?;
                    if alg == Algorithm::Ring {
                        let want = 2 * (k - 1);
                        ensure(
                            sends == want,
                            format!("ring k={k} n={n} rank {rank}: {sends} sends, want {want}"),
                        )?;
                    }
                }
                for (got, _) in allreduce_group(alg, &floats) {
                    for i in 0..n {
                        let rel = (f64::from(got[i]) - float_sum[i]).abs()
                            / magnitude[i].max(f64::MIN_POSITIVE);
                        worst_rel = worst_rel.max(rel);
                    }
                }
                cases += 1;
            }
        }
    }
    ensure(
        worst_rel <= 1e-6,
        format!("float relative error {worst_rel:.2e}"),
    )?;
    Ok(format!("{cases} cases, float rel err {worst_rel:.1e}"))
}

// 2 ------------------------------------------------------------------------

fn gradient_correctness() -> Outcome {
    let model = RealModel::mlp(&[6, 12, 10, 4], 5).map_err(|e| e.to_string())?;
    let params = model.num_params();
    ensure(params <= 1000, format!("{params} parameters"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::new(
        vec![7, 6],
        (0..42).map(|_| rng.random_range(-2.0f32..2.0)).collect(),
    )
    .map_err(|e| e.to_string())?;
    let y = Tensor::from_vec((0..7).map(|i| (i % 4) as f32).collect());
    let (_, cache) = model.forward(&x, &y).map_err(|e| e.to_string())?;
    let grads = model.backward(&cache, &y).map_err(|e| e.to_string())?;

    let base = model.params_f64();
    let h = 1e-4;
    let loss = |p: &[Vec<f64>]| model.loss_f64(p, &x, &y).expect("loss");
    let mut worst = 0.0f64;
    for (li, layer) in base.iter().enumerate() {
        for i in 0..layer.len() {
            let mut p = base.clone();
            p[li][i] = layer[i] + h;
            let up = loss(&p);
            p[li][i] = layer[i] - h;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * h);
            let analytic = f64::from(grads.chunks[li].data()[i]);
            let denom = analytic.abs().max(fd.abs());
            if denom > 0.0 {
                worst = worst.max((analytic - fd).abs() / denom);
            }
        }
    }
    ensure(worst <= 1e-3, format!("max relative error {worst:.2e}"))?;
    Ok(format!("{params} params, max rel err {worst:.1e}"))
}

// 3 ------------------------------------------------------------------------

fn equivalence_config(k: usize) -> Result<TrainingConfig, String> {
    let mut cfg = TrainingConfig::new(FIXED_GLOBAL_BATCH, k, 100).map_err(|e| e.to_string())?;
    cfg.base_lr = 0.05;
    cfg.seed = 9;
    Ok(cfg)
}

/// Plain minibatch SGD on one process, written against the model API only.
fn reference_weights() -> Result<Vec<Tensor>, String> {
    let cfg = equivalence_config(1)?;
    let data = Dataset::gaussian_blobs(&cfg.dataset);
    let mut model = RealModel::mlp(&cfg.model_dims(), cfg.seed).map_err(|e| e.to_string())?;
    for iter in 0..cfg.iterations {
        let (x, y) = shard_batch(&data, iter, 0, 1, FIXED_GLOBAL_BATCH);
        let (_, cache) = model.forward(&x, &y).map_err(|e| e.to_string())?;
        let g = model.backward(&cache, &y).map_err(|e| e.to_string())?;
        model
            .sgd_update(&g, cfg.learning_rate() as f32, cfg.weight_decay as f32)
            .map_err(|e| e.to_string())?;
    }
    Ok(model.params().to_vec())
}

fn rel_diff(got: &[Tensor], want: &[Tensor]) -> f64 {
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (a, b) in got.iter().zip(want) {
        for (p, q) in a.data().iter().zip(b.data()) {
            diff = diff.max(f64::from(p - q).abs());
            scale = scale.max(f64::from(*q).abs());
        }
    }
    diff / scale
}

fn synchronous_equivalence() -> Outcome {
    let want = reference_weights()?;
    let mut worst = 0.0f64;
    for k in [2, 4, 8] {
        let cfg = equivalence_config(k)?;
        let sim = run_local_sim(&cfg, &presets::ethernet(), &presets::compute_s10())
            .map_err(|e| e.to_string())?;
        let real = run_local_tcp(&cfg, &TcpOptions::default()).map_err(|e| e.to_string())?;
        for (mode, params) in [("sim", &sim.params), ("tcp", &real.params)] {
            let rel = rel_diff(params, &want);
            worst = worst.max(rel);
            ensure(
                rel <= 1e-4,
                format!("{mode} k={k}: relative difference {rel:.2e}"),
            )?;
        }
    }
    Ok(format!("max rel diff {worst:.1e}"))
}

// 4 ------------------------------------------------------------------------

fn scaling_study() -> Outcome {
    let ks = [1, 2, 4, 8, 16, 32];
    let rep = run_scaling_experiment(
        &build_profile("GoogleNet").map_err(|e| e.to_string())?,
        FIXED_GLOBAL_BATCH,
        &ks,
        &presets::compute_s10(),
        &presets::ethernet(),
        Aggregation::TreePacked,
    )
    .map_err(|e| e.to_string())?;
    let row = |k: usize| {
        rep.rows
            .iter()
            .find(|r| r.k == k)
            .ok_or(format!("missing K={k}"))
    };
    for w in ks.windows(2) {
        let (a, b) = (row(w[0])?, row(w[1])?);
        ensure(
            close(b.t_comp_s, a.t_comp_s / 2.0, 0.05),
            format!("t_comp K={} -> {} not halved", w[0], w[1]),
        )?;
        ensure(
            b.t_comm_s >= a.t_comm_s,
            format!("t_comm falls from K={} to {}", w[0], w[1]),
        )?;
    }
    let (t16, t32) = (row(16)?.t_total_s, row(32)?.t_total_s);
    ensure(
        t32 > t16,
        format!("total(32)={t32:.4} <= total(16)={t16:.4}"),
    )?;
    Ok(format!("total(16)={t16:.4}s total(32)={t32:.4}s"))
}

// 5 ------------------------------------------------------------------------

fn contention_calibration() -> Outcome {
    let shipped = presets::wifi5();
    let refit = fit_contention(&shipped.clone().with_contention(0.0), WIFI_SLOWDOWN)
        .map_err(|e| e.to_string())?;
    ensure(
        close(refit, shipped.contention_coeff, 1e-6),
        format!(
            "shipped coefficient {} but the WiFi fit gives {refit}",
            shipped.contention_coeff
        ),
    )?;
    let eth = presets::ethernet();
    ensure(
        eth.contention_coeff == 0.0,
        "ethernet preset carries a fitted contention coefficient",
    )?;
    let s = |net: &NetProfile| {
        slowdown(net, Algorithm::Tree, COLLECTIVE_ANCHOR_BYTES, 2, 16).map_err(|e| e.to_string())
    };
    let (wifi, ethernet) = (s(&shipped)?, s(&eth)?);
    ensure(
        close(wifi, WIFI_SLOWDOWN, 0.2),
        format!("wifi slowdown {wifi:.2}x"),
    )?;
    ensure(
        ethernet <= ETHERNET_SLOWDOWN_LIMIT,
        format!("ethernet slowdown {ethernet:.3}x"),
    )?;
    Ok(format!("wifi {wifi:.1}x, ethernet {ethernet:.3}x"))
}

// 6 ------------------------------------------------------------------------

fn aggregation_comparison() -> Outcome {
    let net = presets::ethernet();
    let inception = build_profile("Inception-v3").map_err(|e| e.to_string())?;
    let overhead = fit_invocation_overhead(
        &inception,
        CLUSTER_SIZE,
        &net,
        &presets::compute_s10(),
        INCEPTION_V3_CHUNKWISE_S,
    )
    .map_err(|e| e.to_string())?;
    let compute = presets::compute_s10().with_overhead(overhead);
    let mut comm = CommModel::new(&net, CLUSTER_SIZE);
    let mut cost = |name: &str, agg: Aggregation| -> Result<f64, String> {
        let m = build_profile(name).map_err(|e| e.to_string())?;
        comm_time(&m, agg, &compute, &mut comm).map_err(|e| e.to_string())
    };
    let ratio = cost("Inception-v3", Aggregation::RingChunkwise)?
        / cost("ResNet-50", Aggregation::RingChunkwise)?;
    let want = INCEPTION_V3_CHUNKWISE_S / RESNET50_CHUNKWISE_S;
    ensure(
        close(ratio, want, 0.25),
        format!("chunk-wise ratio {ratio:.3}, want {want:.3} +-25%"),
    )?;

    let mut winners = Vec::new();
    let mut losers = Vec::new();
    for m in all_profiles() {
        let chunk = cost(&m.name, Aggregation::RingChunkwise)?;
        let packed = cost(&m.name, Aggregation::RingPacked)?;
        if chunk < packed {
            winners.push(m);
        } else {
            losers.push(m);
        }
    }
    ensure(!winners.is_empty(), "chunk-wise never beats packed")?;
    let max_win = winners.iter().map(|m| m.num_chunks).max().unwrap_or(0);
    let min_lose = losers
        .iter()
        .map(|m| m.num_chunks)
        .min()
        .unwrap_or(usize::MAX);
    ensure(
        max_win < min_lose,
        "a high-chunk profile beats packed while a lower-chunk one loses",
    )?;
    let names: Vec<&str> = winners.iter().map(|m| m.name.as_str()).collect();
    Ok(format!(
        "ratio {ratio:.3} (84:47 = {want:.3}), chunk-wise wins: {}",
        names.join(",")
    ))
}

// 7 ------------------------------------------------------------------------

fn efficiency_sweep() -> Outcome {
    let compute = presets::compute_s10();
    let googlenet = build_profile("GoogleNet").map_err(|e| e.to_string())?;
    let fitted = fit_throughput(
        &googlenet,
        &presets::ethernet(),
        &compute,
        Aggregation::TreePacked,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        close(fitted, compute.throughput, 1e-6),
        format!(
            "shipped throughput {} but the GoogleNet fit gives {fitted}",
            compute.throughput
        ),
    )?;
    let rep = run_efficiency_sweep(
        &all_profiles(),
        CLUSTER_SIZE,
        &presets::ethernet(),
        &compute,
        Aggregation::RingPacked,
    )
    .map_err(|e| e.to_string())?;
    ensure(rep.rows.len() == 10, format!("{} rows", rep.rows.len()))?;
    let e = |r: &ringtrain_core::harness::ReportRow| r.t_comp_s / (r.t_comp_s + r.t_comm_s);
    let best = rep
        .rows
        .iter()
        .max_by(|a, b| e(a).total_cmp(&e(b)))
        .ok_or("no rows")?;
    let worst = rep
        .rows
        .iter()
        .min_by(|a, b| e(a).total_cmp(&e(b)))
        .ok_or("no rows")?;
    ensure(
        best.model == "SequeezeNet-v1.1",
        format!("max efficiency is {}", best.model),
    )?;
    ensure(
        worst.model == "ResNet-152",
        format!("min efficiency is {}", worst.model),
    )?;
    let (hi, lo) = (e(best), e(worst));
    ensure(
        (hi - SQUEEZENET_V11_EFFICIENCY).abs() <= 0.10,
        format!("SqueezeNet-v1.1 at {:.1}%", hi * 100.0),
    )?;
    ensure(
        (lo - RESNET152_EFFICIENCY).abs() <= 0.10,
        format!("ResNet-152 at {:.1}%", lo * 100.0),
    )?;
    Ok(format!("max {:.1}% min {:.1}%", hi * 100.0, lo * 100.0))
}

// 8 ------------------------------------------------------------------------

fn rar_vs_tree() -> Outcome {
    let m = build_profile("ResNet-152").map_err(|e| e.to_string())?;
    let rep = run_rar_vs_tree(
        &m,
        &[RAR_VS_TREE_K],
        &presets::ethernet(),
        &presets::compute_s10(),
    )
    .map_err(|e| e.to_string())?;
    let t = |alg: &str| {
        rep.rows
            .iter()
            .find(|r| r.k == RAR_VS_TREE_K && r.alg.contains(alg))
            .map(|r| r.t_comm_s)
            .ok_or(format!("no {alg} row"))
    };
    let (ring, tree) = (t("ring")?, t("tree")?);
    ensure(
        ring < tree,
        format!("ring {ring:.3}s not faster than tree {tree:.3}s"),
    )?;
    let speedup = tree / ring;
    ensure(
        (1.0..=2.0).contains(&speedup),
        format!("speedup {speedup:.3}"),
    )?;
    Ok(format!("speedup {speedup:.3}x at K={RAR_VS_TREE_K}"))
}

// 9 ------------------------------------------------------------------------

fn steps(t_comp: &[f64]) -> Vec<f64> {
    t_comp
        .windows(2)
        .filter(|w| w[1] > w[0] + 1e-9)
        .map(|w| w[1])
        .collect()
}

fn thermal_scenario() -> Outcome {
    let compute = presets::compute_s10();
    let preset = presets::thermal_s10();
    let (_, samples) = thermal_series(&preset, &compute, false).map_err(|e| e.to_string())?;
    let t: Vec<f64> = samples.iter().map(|s| s.t_comp_s).collect();
    let base = THERMAL_BASE_T_COMP_S;
    ensure(
        (t[0] - base).abs() < 0.05,
        format!("first iteration {:.3}s", t[0]),
    )?;
    let up = steps(&t);
    ensure(up.len() == 2, format!("{} upward steps", up.len()))?;
    for (got, want) in up.iter().zip([20.9, 24.8]) {
        ensure(
            (got - want).abs() < 0.05,
            format!("step at {got:.3}s, want {want}"),
        )?;
    }
    let mut frozen = preset.clone();
    frozen.cool_rate = f64::INFINITY;
    let (_, cold) = thermal_series(&frozen, &compute, false).map_err(|e| e.to_string())?;
    let cold: Vec<f64> = cold.iter().map(|s| s.t_comp_s).collect();
    ensure(
        steps(&cold).is_empty(),
        "steps remain with infinite cooling",
    )?;
    Ok(format!("steps {:.2}s {:.2}s", up[0], up[1]))
}

// 10 -----------------------------------------------------------------------

const SIM_COMMANDS: [&[&str]; 6] = [
    &["scaling"],
    &["collective"],
    &["aggregation"],
    &["efficiency", "--k", "138"],
    &["rar-vs-tree"],
    &["thermal"],
];

fn ringtrain(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ringtrain"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!(
            "`ringtrain {}` exited {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ),
    )
}

fn csv_files(dir: &Path) -> Result<Vec<String>, String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    Ok(names)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    let first_s = first.to_string_lossy().into_owned();
    let second_s = second.to_string_lossy().into_owned();
    for cmd in SIM_COMMANDS {
        let mut args = vec!["sim", "--out", &first_s];
        args.extend_from_slice(cmd);
        ringtrain(&args, tmp.path())?;
        let manifest = first.join(format!("{}_manifest.json", cmd[0]));
        ringtrain(
            &["rerun", &manifest.to_string_lossy(), "--out", &second_s],
            tmp.path(),
        )?;
    }
    let names = csv_files(&first)?;
    ensure(
        names == csv_files(&second)?,
        "rerun produced a different set of CSV files",
    )?;
    for name in &names {
        let a = std::fs::read(first.join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(second.join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, format!("{name} differs after rerun"))?;
    }
    Ok(format!("{} CSV files identical", names.len()))
}

// --------------------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 collective correctness", 60, collective_correctness),
        ("2 gradient correctness", 10, gradient_correctness),
        ("3 synchronous equivalence", 120, synchronous_equivalence),
        ("4 scaling study", 60, scaling_study),
        ("5 contention calibration", 60, contention_calibration),
        ("6 aggregation comparison", 60, aggregation_comparison),
        ("7 efficiency sweep", 60, efficiency_sweep),
        ("8 ring vs tree", 30, rar_vs_tree),
        ("9 thermal scenario", 10, thermal_scenario),
        ("10 determinism", 60, determinism),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > Duration::from_secs(limit) => {
                Err(format!("{detail}; took {elapsed:.1?}, limit {limit}s"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({elapsed:.2?})"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} ({elapsed:.2?})");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
