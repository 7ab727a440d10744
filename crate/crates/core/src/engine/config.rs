use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::collectives::Algorithm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    RingPacked,
    TreePacked,
    RingChunkwise,
}

impl Aggregation {
    pub const ALL: [Aggregation; 3] = [
        Aggregation::RingPacked,
        Aggregation::TreePacked,
        Aggregation::RingChunkwise,
    ];

    pub fn algorithm(self) -> Algorithm {
        match self {
            Aggregation::RingPacked | Aggregation::RingChunkwise => Algorithm::Ring,
            Aggregation::TreePacked => Algorithm::Tree,
        }
    }

    pub fn is_packed(self) -> bool {
        !matches!(self, Aggregation::RingChunkwise)
    }

    pub fn name(self) -> &'static str {
        match self {
            Aggregation::RingPacked => "ring_packed",
            Aggregation::TreePacked => "tree_packed",
            Aggregation::RingChunkwise => "ring_chunkwise",
        }
    }
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Aggregation::ALL
            .into_iter()
            .find(|a| a.name() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown aggregation '{s}' (expected ring_packed, tree_packed or ring_chunkwise)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrScaling {
    None,
    Linear,
}

/// Learning rate for global batch `batch` given a rate tuned at `reference`.
pub fn scale_lr(base_lr: f64, batch: usize, reference: usize, mode: LrScaling) -> f64 {
    match mode {
        LrScaling::None => base_lr,
        LrScaling::Linear => base_lr * batch as f64 / reference.max(1) as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub samples: usize,
    pub features: usize,
    pub classes: usize,
    /// Spread of class centres relative to unit within-class noise.
    pub separation: f32,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            samples: 1024,
            features: 8,
            classes: 4,
            separation: 3.0,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: vec![16] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub global_batch: usize,
    pub per_device_batch: usize,
    pub workers: usize,
    pub base_lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_aggregation")]
    pub aggregation: Aggregation,
    #[serde(default = "default_lr_scaling")]
    pub lr_scaling: LrScaling,
    /// Global batch at which `base_lr` was tuned.
    #[serde(default = "default_reference_batch")]
    pub lr_reference_batch: usize,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub dataset: DatasetConfig,
}

fn default_aggregation() -> Aggregation {
    Aggregation::RingPacked
}

fn default_lr_scaling() -> LrScaling {
    LrScaling::None
}

fn default_reference_batch() -> usize {
    32
}

impl TrainingConfig {
    /// Small defaults: B=32 on one worker, 0.01 learning rate, 0.0002 weight decay.
    pub fn new(
        global_batch: usize,
        workers: usize,
        iterations: usize,
    ) -> Result<Self, EngineError> {
        let cfg = Self {
            global_batch,
            per_device_batch: global_batch.checked_div(workers).unwrap_or(0),
            workers,
            base_lr: 0.01,
            weight_decay: 0.0002,
            iterations,
            seed: 0,
            aggregation: default_aggregation(),
            lr_scaling: default_lr_scaling(),
            lr_reference_batch: default_reference_batch(),
            model: ModelConfig::default(),
            dataset: DatasetConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| EngineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Keeps the global batch and splits it over `workers`.
    pub fn with_workers(mut self, workers: usize) -> Result<Self, EngineError> {
        if workers == 0 || !self.global_batch.is_multiple_of(workers) {
            return Err(EngineError::Config(format!(
                "global batch {} is not divisible by {workers} workers",
                self.global_batch
            )));
        }
        self.workers = workers;
        self.per_device_batch = self.global_batch / workers;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Config(msg));
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if self.per_device_batch == 0 {
            return bad("per_device_batch must be >= 1".into());
        }
        if self.global_batch != self.per_device_batch * self.workers {
            return bad(format!(
                "global_batch {} != per_device_batch {} x workers {}",
                self.global_batch, self.per_device_batch, self.workers
            ));
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if !(self.base_lr.is_finite() && self.base_lr >= 0.0) {
            return bad(format!(
                "base_lr must be finite and >= 0, got {}",
                self.base_lr
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!(
                "weight_decay must be finite and >= 0, got {}",
                self.weight_decay
            ));
        }
        if self.lr_reference_batch == 0 {
            return bad("lr_reference_batch must be >= 1".into());
        }
        let d = &self.dataset;
        if d.classes < 2 || d.features == 0 {
            return bad("dataset needs >= 2 classes and >= 1 feature".into());
        }
        if d.samples < self.global_batch {
            return bad(format!(
                "dataset has {} samples, fewer than global batch {}",
                d.samples, self.global_batch
            ));
        }
        if self.model.hidden.contains(&0) {
            return bad("hidden layer widths must be >= 1".into());
        }
        Ok(())
    }

    pub fn learning_rate(&self) -> f64 {
        scale_lr(
            self.base_lr,
            self.global_batch,
            self.lr_reference_batch,
            self.lr_scaling,
        )
    }

    /// Layer widths from input features to class logits.
    pub fn model_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.dataset.features];
        dims.extend(&self.model.hidden);
        dims.push(self.dataset.classes);
        dims
    }
}
