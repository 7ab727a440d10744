use ringtrain_core::harness::{
    run_aggregation_comparison, run_collective_bench, run_efficiency_sweep, run_rar_vs_tree,
    run_scaling_experiment, run_thermal_scenario, ExperimentReport, HarnessError,
};
use ringtrain_core::model::{all_profiles, build_profile, ModelProfile, BYTES_PER_MB};

use crate::args::{SimArgs, SimCommand};
use crate::common::{display, load_compute, load_net, load_thermal, Ctx};
use crate::error::CliError;
use crate::manifest::RunManifest;

fn harness_err(e: HarnessError) -> CliError {
    match e {
        HarnessError::Invalid(msg) => CliError::Usage(msg),
        HarnessError::Disconnected { .. } => CliError::Comm(e.to_string()),
        e => CliError::Failed(e.to_string()),
    }
}

fn model(name: &str) -> Result<ModelProfile, CliError> {
    build_profile(name).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn run(args: SimArgs, ctx: &Ctx) -> Result<(), CliError> {
    let name = args.experiment.name();
    let mut manifest = RunManifest::new(&ctx.argv);
    let compute = load_compute(args.compute.as_deref())?;
    if let Some(p) = &args.compute {
        manifest.config_paths.push(display(p));
    }
    let (mut net, net_path) = load_net(&args.net)?;
    manifest
        .config_paths
        .extend(net_path.as_deref().map(display));
    let seed = ctx.resolve_seed(args.seed, net.seed)?;
    net.seed = seed;
    manifest.seeds.insert("seed".into(), seed);

    let report: ExperimentReport = match &args.experiment {
        SimCommand::Scaling {
            model: m,
            batch,
            k,
            aggregation,
        } => run_scaling_experiment(&model(m)?, *batch, k, &compute, &net, *aggregation),
        SimCommand::Collective {
            sizes_mb,
            k,
            nets,
            algs,
        } => {
            let mut profiles = Vec::new();
            for spec in nets {
                let (mut p, path) = load_net(spec)?;
                manifest.config_paths.extend(path.as_deref().map(display));
                p.seed = seed;
                profiles.push((spec.clone(), p));
            }
            if sizes_mb.iter().any(|&mb| !(mb >= 0.0)) {
                return Err(CliError::Usage("sizes must be >= 0".into()));
            }
            let sizes: Vec<usize> = sizes_mb
                .iter()
                .map(|mb| (mb * BYTES_PER_MB).round() as usize)
                .collect();
            run_collective_bench(&sizes, k, &profiles, algs)
        }
        SimCommand::Aggregation { k, models } => {
            let list = if models.is_empty() {
                all_profiles()
            } else {
                models.iter().map(|m| model(m)).collect::<Result<_, _>>()?
            };
            run_aggregation_comparison(&list, *k, &net, &compute)
        }
        SimCommand::Efficiency { k, aggregation } => {
            run_efficiency_sweep(&all_profiles(), *k, &net, &compute, *aggregation)
        }
        SimCommand::RarVsTree { model: m, k } => run_rar_vs_tree(&model(m)?, k, &net, &compute),
        SimCommand::Thermal { fan, thermal } => {
            manifest
                .config_paths
                .extend(thermal.as_deref().map(display));
            let preset = load_thermal(thermal.as_deref())?;
            run_thermal_scenario(&preset, &compute, *fan)
        }
    }
    .map_err(harness_err)?;

    let paths = report
        .write(&args.out, name)
        .map_err(|e| CliError::io(args.out.display(), e))?;
    manifest.outputs = paths.iter().map(|p| display(p)).collect();
    let manifest_path = manifest.write(&args.out, name)?;

    print!("{}", report.to_csv());
    for (key, value) in &report.meta.derived {
        eprintln!("{key} = {value}");
    }
    for c in &report.meta.checks {
        eprintln!(
            "[{}] {} {}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    eprintln!(
        "wrote {} and {}",
        manifest.outputs.join(", "),
        manifest_path.display()
    );

    let failed = report.failed_checks();
    if failed.is_empty() {
        Ok(())
    } else {
        let names: Vec<&str> = failed.iter().map(|c| c.name.as_str()).collect();
        Err(CliError::Assertion(names.join("; ")))
    }
}
