//! Synchronous data-parallel training: shard, compute local gradients,
//! sum them with a collective, average, update.

mod config;
mod data;
mod worker;

use std::fmt::Write as _;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{scale_lr, Aggregation, DatasetConfig, LrScaling, ModelConfig, TrainingConfig};
pub use data::{shard_batch, shard_indices, Dataset};
pub use worker::{run_training, Clock, Worker};

use crate::harness::ComputeProfile;
use crate::model::{ModelError, Tensor};
use crate::transport::{CommError, NetProfile, SimNetwork, TcpOptions, TcpTransport, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Setup,
    Forward,
    Backward,
    Aggregate,
    Update,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Setup => "setup",
            Phase::Forward => "forward",
            Phase::Backward => "backward",
            Phase::Aggregate => "aggregate",
            Phase::Update => "update",
        })
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("rank {rank} failed during {phase}: {source}")]
    Comm {
        rank: usize,
        phase: Phase,
        #[source]
        source: CommError,
    },
    #[error("rank {rank} failed during {phase}: {source}")]
    Model {
        rank: usize,
        phase: Phase,
        #[source]
        source: ModelError,
    },
    #[error("rank {rank} worker thread panicked")]
    Panicked { rank: usize },
}

impl EngineError {
    pub fn rank(&self) -> Option<usize> {
        match self {
            EngineError::Config(_) => None,
            EngineError::Comm { rank, .. }
            | EngineError::Model { rank, .. }
            | EngineError::Panicked { rank } => Some(*rank),
        }
    }

    pub fn is_comm(&self) -> bool {
        matches!(self, EngineError::Comm { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iter: usize,
    pub rank: usize,
    pub t_comp: f64,
    pub t_comm: f64,
    pub loss: f32,
    /// Weight checksum after this iteration's update.
    pub checksum: u64,
}

pub const METRICS_HEADER: &str = "iter,rank,t_comp_s,t_comm_s,loss";

impl IterationMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iter, self.rank, self.t_comp, self.t_comm, self.loss
        )
    }
}

pub fn metrics_csv(rows: &[IterationMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Result of a whole in-process group run.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    /// `metrics[rank][iter]`.
    pub metrics: Vec<Vec<IterationMetrics>>,
    /// Rank 0's final weights.
    pub params: Vec<Tensor>,
    pub final_checksums: Vec<u64>,
}

impl TrainingOutcome {
    pub fn rank0(&self) -> &[IterationMetrics] {
        &self.metrics[0]
    }
}

/// Trains on one thread per transport and collects every rank's results.
pub fn run_group<T: Transport + 'static>(
    config: &TrainingConfig,
    transports: Vec<T>,
    clock: Clock,
) -> Result<TrainingOutcome, EngineError> {
    config.validate()?;
    let handles: Vec<_> = transports
        .into_iter()
        .map(|t| {
            let cfg = config.clone();
            let clock = clock.clone();
            let rank = t.rank();
            let handle = thread::spawn(move || -> Result<_, EngineError> {
                let mut w = Worker::new(cfg, t, clock)?;
                let metrics = run_training(&mut w, |_| {})?;
                let model = w.into_model();
                Ok((metrics, model))
            });
            (rank, handle)
        })
        .collect();

    let mut results = Vec::new();
    for (rank, h) in handles {
        results.push(h.join().unwrap_or(Err(EngineError::Panicked { rank })));
    }
    if let Some(err) = pick_root_cause(&mut results) {
        return Err(err);
    }
    let mut metrics = Vec::new();
    let mut checksums = Vec::new();
    let mut params = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (m, model) = r.expect("errors handled above");
        checksums.push(model.checksum());
        if i == 0 {
            params = model.params().to_vec();
        }
        metrics.push(m);
    }
    Ok(TrainingOutcome {
        metrics,
        params,
        final_checksums: checksums,
    })
}

/// Prefers an error that is not a timeout or closed peer, since those are
/// usually knock-on effects of another rank's failure.
fn pick_root_cause<R>(results: &mut [Result<R, EngineError>]) -> Option<EngineError> {
    let knock_on = |e: &EngineError| {
        matches!(
            e,
            EngineError::Comm {
                source: CommError::Timeout { .. } | CommError::PeerClosed { .. },
                ..
            }
        )
    };
    let idx = results
        .iter()
        .position(|r| matches!(r, Err(e) if !knock_on(e)))
        .or_else(|| results.iter().position(Result::is_err))?;
    let taken = std::mem::replace(&mut results[idx], Err(EngineError::Config(String::new())));
    taken.err()
}

/// All ranks in this process over simulated links with virtual time.
pub fn run_local_sim(
    config: &TrainingConfig,
    net: &NetProfile,
    compute: &ComputeProfile,
) -> Result<TrainingOutcome, EngineError> {
    net.validate().map_err(EngineError::Config)?;
    let group = SimNetwork::group(net, config.workers);
    run_group(config, group, Clock::Virtual(compute.clone()))
}

/// All ranks in this process over loopback TCP with wall-clock timing.
pub fn run_local_tcp(
    config: &TrainingConfig,
    opts: &TcpOptions,
) -> Result<TrainingOutcome, EngineError> {
    config.validate()?;
    let group =
        TcpTransport::local_group(config.workers, opts).map_err(|source| EngineError::Comm {
            rank: source.failed_rank().unwrap_or(0),
            phase: Phase::Setup,
            source,
        })?;
    run_group(config, group, Clock::Wall)
}
