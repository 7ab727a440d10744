use std::net::{SocketAddr, ToSocketAddrs};
use std::path::Path;
use std::process::{Child, Command, ExitStatus};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use ringtrain_core::engine::{
    metrics_csv, run_local_sim, run_training, Clock, TrainingConfig, Worker,
};
use ringtrain_core::model::Tensor;
use ringtrain_core::transport::{Coordinator, TcpOptions, TcpTransport};

use crate::args::{CoordinatorArgs, LaunchArgs, LaunchMode, WorkerArgs};
use crate::common::{display, load_compute, load_config, load_net, write_file, Ctx, SEED_ENV};
use crate::error::CliError;
use crate::manifest::RunManifest;

/// Final weights of one rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub rank: usize,
    pub checksum: u64,
    pub shapes: Vec<Vec<usize>>,
    pub params: Vec<Vec<f32>>,
}

impl FinalState {
    fn new(rank: usize, checksum: u64, params: &[Tensor]) -> Self {
        Self {
            rank,
            checksum,
            shapes: params.iter().map(|t| t.shape().to_vec()).collect(),
            params: params.iter().map(|t| t.data().to_vec()).collect(),
        }
    }

    fn to_json(&self) -> String {
        serde_json::to_string(self).expect("final state serializes") + "\n"
    }
}

fn secs(s: f64) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(s).map_err(|_| CliError::Usage(format!("invalid timeout {s}")))
}

fn resolve_addr(text: &str) -> Result<SocketAddr, CliError> {
    text.to_socket_addrs()
        .map_err(|e| CliError::Usage(format!("bad address '{text}': {e}")))?
        .next()
        .ok_or_else(|| CliError::Usage(format!("address '{text}' resolves to nothing")))
}

fn sized_config(path: &Path, workers: usize, ctx: &Ctx) -> Result<TrainingConfig, CliError> {
    let mut cfg = load_config(path)?;
    cfg.seed = ctx.resolve_seed(None, cfg.seed)?;
    if cfg.workers != workers {
        cfg = cfg.with_workers(workers)?;
    }
    Ok(cfg)
}

pub fn worker(args: WorkerArgs, ctx: &Ctx) -> Result<(), CliError> {
    if args.rank >= args.size {
        return Err(CliError::Usage(format!(
            "rank {} outside a group of {}",
            args.rank, args.size
        )));
    }
    let cfg = sized_config(&args.config, args.size, ctx)?;
    let coordinator = resolve_addr(&args.coordinator)?;
    let timeout = secs(args.timeout)?;
    let opts = TcpOptions {
        bind_host: args.bind_host,
        recv_timeout: timeout,
        connect_timeout: timeout,
    };
    let transport = TcpTransport::join(coordinator, args.rank, args.size, &opts)?;
    let mut w = Worker::new(cfg, transport, Clock::Wall)?;
    let metrics = run_training(&mut w, |_| {})?;
    let rank = args.rank;
    write_file(
        &args.out.join(format!("rank{rank}.csv")),
        &metrics_csv(&metrics),
    )?;
    let model = w.into_model();
    let state = FinalState::new(rank, model.checksum(), model.params());
    write_file(
        &args.out.join(format!("rank{rank}_final.json")),
        &state.to_json(),
    )?;
    Ok(())
}

pub fn coordinator(args: CoordinatorArgs) -> Result<(), CliError> {
    let coord = Coordinator::bind(args.bind.as_str())?;
    println!("{}", coord.local_addr());
    coord.run(args.size, secs(args.timeout)?)?;
    Ok(())
}

pub fn launch(args: LaunchArgs, ctx: &Ctx) -> Result<(), CliError> {
    let cfg = sized_config(&args.config, args.workers, ctx)?;
    let mut manifest = RunManifest::new(&ctx.argv);
    manifest.config_paths.push(display(&args.config));
    manifest.seeds.insert("seed".into(), cfg.seed);

    let (rank0_csv, final_state) = match args.mode {
        LaunchMode::Sim => {
            let (mut net, net_path) = load_net(&args.net)?;
            manifest
                .config_paths
                .extend(net_path.as_deref().map(display));
            net.seed = cfg.seed;
            manifest.seeds.insert("net_seed".into(), net.seed);
            let compute = load_compute(args.compute.as_deref())?;
            manifest
                .config_paths
                .extend(args.compute.as_deref().map(display));
            let out = run_local_sim(&cfg, &net, &compute)?;
            for (rank, m) in out.metrics.iter().enumerate() {
                let p = args.out.join(format!("rank{rank}.csv"));
                write_file(&p, &metrics_csv(m))?;
                manifest.outputs.push(display(&p));
            }
            (
                metrics_csv(out.rank0()),
                FinalState::new(0, out.final_checksums[0], &out.params).to_json(),
            )
        }
        LaunchMode::Real => {
            let sized = args.out.join("config.json");
            write_file(&sized, &cfg.to_json())?;
            spawn_workers(&args, &sized, cfg.seed)?;
            let read = |name: String| {
                let p = args.out.join(&name);
                std::fs::read_to_string(&p).map_err(|e| CliError::io(p.display(), e))
            };
            for rank in 0..args.workers {
                manifest
                    .outputs
                    .push(display(&args.out.join(format!("rank{rank}.csv"))));
            }
            (read("rank0.csv".into())?, read("rank0_final.json".into())?)
        }
    };

    let metrics_path = args.out.join("metrics.csv");
    write_file(&metrics_path, &rank0_csv)?;
    let final_path = args.out.join("final.json");
    write_file(&final_path, &final_state)?;
    manifest.outputs.push(display(&metrics_path));
    manifest.outputs.push(display(&final_path));
    let manifest_path = manifest.write(&args.out, "launch")?;
    print!("{rank0_csv}");
    eprintln!(
        "wrote {} and {}",
        manifest.outputs.join(", "),
        manifest_path.display()
    );
    Ok(())
}

fn spawn_workers(args: &LaunchArgs, config: &Path, seed: u64) -> Result<(), CliError> {
    let timeout = secs(args.timeout)?;
    let coord = Coordinator::bind("127.0.0.1:0")?;
    let addr = coord.local_addr();
    let rendezvous = coord.spawn(args.workers, timeout);
    let exe = std::env::current_exe().map_err(|e| CliError::io("locating own executable", e))?;

    let mut children: Vec<Option<Child>> = Vec::with_capacity(args.workers);
    for rank in 0..args.workers {
        let mut cmd = Command::new(&exe);
        cmd.arg("worker")
            .args(["--rank", &rank.to_string()])
            .args(["--size", &args.workers.to_string()])
            .args(["--coordinator", &addr.to_string()])
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(&args.out)
            .args(["--timeout", &args.timeout.to_string()])
            .env(SEED_ENV, seed.to_string());
        die_with_parent(&mut cmd);
        match cmd.spawn() {
            Ok(child) => children.push(Some(child)),
            Err(e) => {
                kill_all(&mut children);
                return Err(CliError::io("spawning worker", e));
            }
        }
    }

    let mut failure: Option<(usize, ExitStatus)> = None;
    while children.iter().any(Option::is_some) {
        for (rank, slot) in children.iter_mut().enumerate() {
            if let Some(child) = slot {
                if let Ok(Some(status)) = child.try_wait() {
                    *slot = None;
                    if !status.success() && failure.is_none() {
                        failure = Some((rank, status));
                    }
                }
            }
        }
        if failure.is_some() {
            kill_all(&mut children);
            break;
        }
        thread::sleep(Duration::from_millis(10));
    }
    let rendezvous = rendezvous
        .join()
        .map_err(|_| CliError::Failed("coordinator thread panicked".into()))?;

    if let Some((rank, status)) = failure {
        let msg = format!("worker rank {rank} exited with {status}");
        return Err(match status.code() {
            Some(2) => CliError::Usage(msg),
            Some(4) => CliError::Assertion(msg),
            Some(1) => CliError::Failed(msg),
            _ => CliError::Comm(msg),
        });
    }
    rendezvous?;
    Ok(())
}

fn kill_all(children: &mut [Option<Child>]) {
    for child in children.iter_mut().flatten() {
        let _ = child.kill();
        let _ = child.wait();
    }
}

/// Workers receive SIGTERM when the launcher goes away.
#[cfg(target_os = "linux")]
fn die_with_parent(cmd: &mut Command) {
    use std::os::unix::process::CommandExt;
    let parent = std::process::id() as libc::pid_t;
    // SAFETY: prctl and getppid are async-signal-safe; nothing else runs between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            if libc::prctl(libc::PR_SET_PDEATHSIG, libc::SIGTERM) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            if libc::getppid() != parent {
                libc::raise(libc::SIGTERM);
            }
            Ok(())
        });
    }
}

#[cfg(not(target_os = "linux"))]
fn die_with_parent(_cmd: &mut Command) {}
