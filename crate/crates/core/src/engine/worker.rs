use std::sync::Arc;
use std::time::Instant;

use super::config::TrainingConfig;
use super::data::{shard_batch, Dataset};
use super::{EngineError, IterationMetrics, Phase};
use crate::collectives::CommGroup;
use crate::harness::ComputeProfile;
use crate::model::{GradientSet, RealModel};
use crate::transport::Transport;

/// How a worker measures its phases.
#[derive(Debug, Clone, PartialEq)]
pub enum Clock {
    /// Wall-clock durations.
    Wall,
    /// Compute and copy costs come from the profile and are charged to the
    /// transport's virtual clock; communication time is read off that clock.
    Virtual(ComputeProfile),
}

/// One rank of a synchronous data-parallel job.
pub struct Worker<T: Transport> {
    config: TrainingConfig,
    model: RealModel,
    dataset: Arc<Dataset>,
    group: CommGroup<T>,
    clock: Clock,
    iter: usize,
}

impl<T: Transport> Worker<T> {
    pub fn new(config: TrainingConfig, transport: T, clock: Clock) -> Result<Self, EngineError> {
        let dataset = Arc::new(Dataset::gaussian_blobs(&config.dataset));
        Self::with_dataset(config, transport, clock, dataset)
    }

    pub fn with_dataset(
        config: TrainingConfig,
        transport: T,
        clock: Clock,
        dataset: Arc<Dataset>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let rank = transport.rank();
        if transport.size() != config.workers {
            return Err(EngineError::Config(format!(
                "transport has {} ranks but config asks for {} workers",
                transport.size(),
                config.workers
            )));
        }
        let mut group = CommGroup::new(transport);
        if let Clock::Virtual(profile) = &clock {
            profile.validate().map_err(EngineError::Config)?;
            if group.transport().virtual_time().is_none() {
                return Err(EngineError::Config(
                    "virtual clock needs a simulated transport".into(),
                ));
            }
            group = group.with_invocation_overhead(profile.invocation_overhead_s);
        }
        let model = RealModel::mlp(&config.model_dims(), config.seed).map_err(|source| {
            EngineError::Model {
                rank,
                phase: Phase::Setup,
                source,
            }
        })?;
        Ok(Self {
            config,
            model,
            dataset,
            group,
            clock,
            iter: 0,
        })
    }

    pub fn rank(&self) -> usize {
        self.group.rank()
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn model(&self) -> &RealModel {
        &self.model
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn group(&self) -> &CommGroup<T> {
        &self.group
    }

    pub fn into_model(self) -> RealModel {
        self.model
    }

    /// Local gradient of this rank's shard at the current iteration.
    pub fn local_gradient(&self) -> Result<(f32, GradientSet), EngineError> {
        let rank = self.rank();
        let (x, y) = shard_batch(
            &self.dataset,
            self.iter,
            rank,
            self.config.workers,
            self.config.per_device_batch,
        );
        let (loss, cache) = self
            .model
            .forward(&x, &y)
            .map_err(|source| EngineError::Model {
                rank,
                phase: Phase::Forward,
                source,
            })?;
        let grads = self
            .model
            .backward(&cache, &y)
            .map_err(|source| EngineError::Model {
                rank,
                phase: Phase::Backward,
                source,
            })?;
        Ok((loss, grads))
    }

    /// Sums `grads` over all ranks with the configured strategy.
    pub fn aggregate(&mut self, grads: GradientSet) -> Result<GradientSet, EngineError> {
        let rank = self.rank();
        let agg = self.config.aggregation;
        let fail = |source| EngineError::Comm {
            rank,
            phase: Phase::Aggregate,
            source,
        };
        if agg.is_packed() {
            if let Clock::Virtual(profile) = &self.clock {
                if self.config.workers > 1 {
                    let bytes = grads.total_elems() * 4;
                    self.group.transport_mut().advance(profile.copy_time(bytes));
                }
            }
            self.group
                .allreduce_packed(agg.algorithm(), &grads)
                .map_err(fail)
        } else {
            let mut grads = grads;
            self.group
                .allreduce_chunkwise(agg.algorithm(), &mut grads)
                .map_err(fail)?;
            Ok(grads)
        }
    }

    /// forward, backward, aggregate, average, update.
    pub fn train_step(&mut self) -> Result<IterationMetrics, EngineError> {
        let rank = self.rank();
        let k = self.config.workers;

        let wall = Instant::now();
        let (loss, grads) = self.local_gradient()?;
        let t_comp = match &self.clock {
            Clock::Wall => wall.elapsed().as_secs_f64(),
            Clock::Virtual(profile) => {
                let t = profile.t_comp_elems(self.model.num_params(), self.config.per_device_batch);
                self.group.transport_mut().advance(t);
                t
            }
        };

        let wall = Instant::now();
        let before = self.group.transport().virtual_time();
        let mut grads = self.aggregate(grads)?;
        let t_comm = match (&self.clock, before, self.group.transport().virtual_time()) {
            (Clock::Virtual(_), Some(a), Some(b)) => b - a,
            _ => wall.elapsed().as_secs_f64(),
        };

        grads.scale(1.0 / k as f32);
        let lr = self.config.learning_rate() as f32;
        let wd = self.config.weight_decay as f32;
        self.model
            .sgd_update(&grads, lr, wd)
            .map_err(|source| EngineError::Model {
                rank,
                phase: Phase::Update,
                source,
            })?;

        let metrics = IterationMetrics {
            iter: self.iter,
            rank,
            t_comp,
            t_comm,
            loss,
            checksum: self.model.checksum(),
        };
        self.iter += 1;
        Ok(metrics)
    }
}

/// Runs every configured iteration, passing each record to `on_metric`.
pub fn run_training<T: Transport>(
    worker: &mut Worker<T>,
    mut on_metric: impl FnMut(&IterationMetrics),
) -> Result<Vec<IterationMetrics>, EngineError> {
    let mut out = Vec::with_capacity(worker.config.iterations);
    while worker.iter < worker.config.iterations {
        let m = worker.train_step()?;
        on_metric(&m);
        out.push(m);
    }
    Ok(out)
}
