use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ringtrain_core::collectives::Algorithm;
use ringtrain_core::engine::Aggregation;

#[derive(Debug, Parser)]
#[command(
    name = "ringtrain",
    version,
    about = "Synchronous data-parallel training over ring allreduce, real or simulated"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Join a group as one rank and train.
    Worker(WorkerArgs),
    /// Serve one rendezvous for externally started workers.
    Coordinator(CoordinatorArgs),
    /// Start K local workers and collect rank 0's metrics.
    Launch(LaunchArgs),
    /// Run a simulated experiment.
    Sim(SimArgs),
    /// Measure point-to-point throughput.
    Probe(ProbeArgs),
    /// Fit the calibrated constants from the base presets and print them.
    Calibrate(CalibrateArgs),
    /// Re-run a recorded command from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct WorkerArgs {
    #[arg(long)]
    pub rank: usize,
    #[arg(long)]
    pub size: usize,
    /// Rendezvous address, host:port.
    #[arg(long)]
    pub coordinator: String,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Address other ranks use to reach this one.
    #[arg(long, default_value = "127.0.0.1")]
    pub bind_host: IpAddr,
    /// Seconds before a receive or the rendezvous gives up.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
}

#[derive(Debug, Args)]
pub struct CoordinatorArgs {
    #[arg(long, default_value = "127.0.0.1:0")]
    pub bind: String,
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LaunchMode {
    Real,
    Sim,
}

#[derive(Debug, Args)]
pub struct LaunchArgs {
    #[arg(long)]
    pub workers: usize,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = LaunchMode::Real)]
    pub mode: LaunchMode,
    /// Network preset name or JSON path (sim mode).
    #[arg(long, default_value = "ethernet")]
    pub net: String,
    /// Compute profile JSON path (sim mode); defaults to the shipped preset.
    #[arg(long)]
    pub compute: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[command(subcommand)]
    pub experiment: SimCommand,
    /// Network preset name or JSON path.
    #[arg(long, global = true, default_value = "ethernet")]
    pub net: String,
    /// Compute profile JSON path; defaults to the shipped preset.
    #[arg(long, global = true)]
    pub compute: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the network seed (and RINGTRAIN_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Fixed global batch over a growing number of ranks.
    Scaling {
        #[arg(long, default_value = "GoogleNet")]
        model: String,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
        k: Vec<usize>,
        #[arg(long, default_value = "tree_packed")]
        aggregation: Aggregation,
    },
    /// Allreduce time grid over sizes, group sizes, networks and algorithms.
    Collective {
        #[arg(long, value_delimiter = ',', default_value = "0,1,10,37.5")]
        sizes_mb: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        k: Vec<usize>,
        /// Preset names or JSON paths.
        #[arg(long, value_delimiter = ',', default_value = "ethernet,wifi5")]
        nets: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "ring,tree")]
        algs: Vec<Algorithm>,
    },
    /// Packed ring, packed tree and chunk-wise ring per model.
    Aggregation {
        #[arg(long, default_value_t = 138)]
        k: usize,
        /// Model names; all ten by default.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
    },
    /// Computational efficiency of every model at its own batch size.
    Efficiency {
        #[arg(long, default_value_t = 138)]
        k: usize,
        #[arg(long, default_value = "ring_packed")]
        aggregation: Aggregation,
    },
    /// Packed ring against packed tree.
    RarVsTree {
        #[arg(long, default_value = "ResNet-152")]
        model: String,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,46")]
        k: Vec<usize>,
    },
    /// One device heating up under back-to-back iterations.
    Thermal {
        #[arg(long)]
        fan: bool,
        /// Thermal preset JSON path; defaults to the shipped preset.
        #[arg(long)]
        thermal: Option<PathBuf>,
    },
}

impl SimCommand {
    pub fn name(&self) -> &'static str {
        match self {
            SimCommand::Scaling { .. } => "scaling",
            SimCommand::Collective { .. } => "collective",
            SimCommand::Aggregation { .. } => "aggregation",
            SimCommand::Efficiency { .. } => "efficiency",
            SimCommand::RarVsTree { .. } => "rar-vs-tree",
            SimCommand::Thermal { .. } => "thermal",
        }
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "endpoint")]
pub struct ProbeTarget {
    /// Listen on host:port and answer probes.
    #[arg(long)]
    pub server: Option<String>,
    /// Probe a server at host:port.
    #[arg(long)]
    pub client: Option<String>,
    /// Probe a simulated link (preset name or JSON path).
    #[arg(long)]
    pub sim: Option<String>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub target: ProbeTarget,
    #[arg(long, default_value_t = 1.0)]
    pub seconds: f64,
    #[arg(long, default_value_t = 10)]
    pub repeat: usize,
    /// Server only: stop after this many probes.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, default_value = "ethernet")]
    pub ethernet: String,
    #[arg(long, default_value = "wifi5")]
    pub wifi: String,
    #[arg(long)]
    pub compute: Option<PathBuf>,
    /// Aggregation used by the fixed-batch scaling fit.
    #[arg(long, default_value = "tree_packed")]
    pub aggregation: Aggregation,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
