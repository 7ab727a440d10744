mod args;
mod common;
mod error;
mod manifest;
mod probe;
mod sim;
mod train;

use std::process::ExitCode;

use clap::Parser;
use ringtrain_core::harness::calibrate::calibrate_all;

use args::{CalibrateArgs, Cli, Command, RerunArgs};
use common::{load_compute, load_net, Ctx};
use error::CliError;
use manifest::{with_out, RunManifest};

fn dispatch(cli: Cli, ctx: &Ctx) -> Result<(), CliError> {
    match cli.command {
        Command::Worker(a) => train::worker(a, ctx),
        Command::Coordinator(a) => train::coordinator(a),
        Command::Launch(a) => train::launch(a, ctx),
        Command::Sim(a) => sim::run(a, ctx),
        Command::Probe(a) => probe::run(a, ctx),
        Command::Calibrate(a) => calibrate(a),
        Command::Rerun(a) => rerun(a),
    }
}

fn calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let (eth, _) = load_net(&args.ethernet)?;
    let (wifi, _) = load_net(&args.wifi)?;
    let compute = load_compute(args.compute.as_deref())?;
    let fit = calibrate_all(&eth, &wifi, &compute, args.aggregation)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&fit).expect("calibration serializes")
    );
    Ok(())
}

fn rerun(args: RerunArgs) -> Result<(), CliError> {
    let manifest = RunManifest::load(&args.manifest)?;
    let mut argv = manifest.command_line.clone();
    if argv.first().map(String::as_str) == Some("rerun") {
        return Err(CliError::Usage(
            "a rerun manifest cannot point at another rerun".into(),
        ));
    }
    if let Some(out) = &args.out {
        argv = with_out(&argv, out);
    }
    let cli =
        Cli::try_parse_from(std::iter::once("ringtrain".to_string()).chain(argv.iter().cloned()))
            .map_err(|e| CliError::Usage(format!("manifest command line does not parse: {e}")))?;
    let ctx = Ctx {
        argv,
        seed_override: manifest.seeds.get("seed").copied(),
    };
    dispatch(cli, &ctx)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let ctx = Ctx {
        argv: std::env::args().skip(1).collect(),
        seed_override: None,
    };
    match dispatch(cli, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
