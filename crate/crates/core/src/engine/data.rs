use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::DatasetConfig;
use crate::model::Tensor;

/// Seeded Gaussian-blob classification data.
///
/// Sample `i` has label `i mod classes` and features drawn around that
/// class's centre with unit noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: usize,
    classes: usize,
    inputs: Vec<f32>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn gaussian_blobs(cfg: &DatasetConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let centres: Vec<f32> = (0..cfg.classes * cfg.features)
            .map(|_| cfg.separation * rng.sample::<f32, _>(StandardNormal))
            .collect();
        let mut inputs = Vec::with_capacity(cfg.samples * cfg.features);
        let mut labels = Vec::with_capacity(cfg.samples);
        for i in 0..cfg.samples {
            let c = i % cfg.classes;
            labels.push(c);
            for f in 0..cfg.features {
                let noise: f32 = rng.sample(StandardNormal);
                inputs.push(centres[c * cfg.features + f] + noise);
            }
        }
        Self {
            features: cfg.features,
            classes: cfg.classes,
            inputs,
            labels,
        }
    }

    /// Dataset from row-major `inputs` `[n, features]` and class labels.
    pub fn from_parts(
        features: usize,
        classes: usize,
        inputs: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self, String> {
        if features == 0 || inputs.len() != labels.len() * features {
            return Err(format!(
                "{} inputs do not fill {} rows of {features}",
                inputs.len(),
                labels.len()
            ));
        }
        if let Some(&c) = labels.iter().find(|&&c| c >= classes) {
            return Err(format!("label {c} out of range for {classes} classes"));
        }
        Ok(Self {
            features,
            classes,
            inputs,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Inputs `[n, features]` and class-index labels `[n]` for `indices`.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let mut x = Vec::with_capacity(indices.len() * self.features);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(&self.inputs[i * self.features..(i + 1) * self.features]);
            y.push(self.labels[i] as f32);
        }
        let x = Tensor::new(vec![indices.len(), self.features], x).expect("gather shape");
        (x, Tensor::from_vec(y))
    }
}

/// Global sample indices of rank `rank`'s shard at iteration `iter`:
/// `(iter*B + rank*b + j) mod len` for `j < b`, with `B = K*b`.
pub fn shard_indices(
    dataset_len: usize,
    iter: usize,
    rank: usize,
    k: usize,
    b: usize,
) -> Vec<usize> {
    let global = k * b;
    (0..b)
        .map(|j| (iter * global + rank * b + j) % dataset_len)
        .collect()
}

pub fn shard_batch(
    dataset: &Dataset,
    iter: usize,
    rank: usize,
    k: usize,
    b: usize,
) -> (Tensor, Tensor) {
    dataset.gather(&shard_indices(dataset.len(), iter, rank, k, b))
}
