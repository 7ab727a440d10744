use std::time::Duration;

use ringtrain_core::transport::{
    probe_stats, sim_probe, tcp_probe_client, ProbeServer, ProbeStats,
};

use crate::args::ProbeArgs;
use crate::common::{load_net, Ctx};
use crate::error::CliError;

const SIM_MESSAGE_BYTES: usize = 128 * 1024;

pub fn run(args: ProbeArgs, ctx: &Ctx) -> Result<(), CliError> {
    if !(args.seconds > 0.0) || args.repeat == 0 {
        return Err(CliError::Usage(
            "--seconds must be positive and --repeat at least 1".into(),
        ));
    }
    if let Some(addr) = &args.target.server {
        let server = ProbeServer::bind(addr.as_str())?;
        println!("listening on {}", server.local_addr());
        server.serve(args.count)?;
        return Ok(());
    }

    let runs = if let Some(addr) = &args.target.client {
        let addr = addr
            .parse()
            .map_err(|e| CliError::Usage(format!("bad address '{addr}': {e}")))?;
        let duration = Duration::from_secs_f64(args.seconds);
        let mut runs = Vec::with_capacity(args.repeat);
        for _ in 0..args.repeat {
            let r = tcp_probe_client(addr, duration)?;
            let stop = r.partial;
            runs.push(r);
            if stop {
                break;
            }
        }
        runs
    } else {
        let spec = args.target.sim.as_deref().unwrap_or("ethernet");
        let (mut net, _) = load_net(spec)?;
        net.seed = ctx.resolve_seed(None, net.seed)?;
        let mut runs = Vec::with_capacity(args.repeat);
        for run in 0..args.repeat as u64 {
            let r = sim_probe(&net, args.seconds, SIM_MESSAGE_BYTES, run);
            let stop = r.partial;
            runs.push(r);
            if stop {
                break;
            }
        }
        runs
    };
    report(probe_stats(runs))
}

fn report(stats: ProbeStats) -> Result<(), CliError> {
    for (i, r) in stats.runs.iter().enumerate() {
        let flag = if r.partial { " (partial)" } else { "" };
        println!(
            "run {i}: {:.2} Mbps, {} bytes in {:.3} s{flag}",
            r.mbps, r.bytes, r.elapsed_s
        );
    }
    println!(
        "{:.2} +- {:.2} Mbps over {} runs",
        stats.mean_mbps,
        stats.std_mbps,
        stats.runs.len()
    );
    if stats.runs.iter().any(|r| r.partial) {
        return Err(CliError::Comm("probe aborted: link dropped".into()));
    }
    Ok(())
}
