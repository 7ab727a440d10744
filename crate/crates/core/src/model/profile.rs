use serde::{Deserialize, Serialize};

use super::ModelError;

/// Bytes per megabyte used for every model and payload size (binary MB).
pub const BYTES_PER_MB: f64 = 1_048_576.0;

/// `(name, size MB, gradient chunks, mini-batch per device)` for the evaluated DNNs.
pub const TABLE: [(&str, f64, usize, usize); 10] = [
    ("AlexNet", 232.56, 16, 32),
    ("GoogleNet", 26.70, 116, 16),
    ("Inception-v3", 91.05, 556, 4),
    ("Mobilenet-v1", 16.23, 164, 8),
    ("Mobilenet-v2", 13.51, 320, 8),
    ("ResNet-50", 97.70, 321, 4),
    ("ResNet-101", 170.34, 626, 2),
    ("ResNet-152", 230.20, 932, 2),
    ("SequeezeNet-v1.0", 4.76, 52, 16),
    ("SequeezeNet-v1.1", 4.71, 52, 32),
];

/// Synthetic stand-in for a real network: only its gradient layout matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub size_mb: f64,
    pub num_chunks: usize,
    pub batch_per_device: usize,
    pub chunk_elems: Vec<usize>,
}

impl ModelProfile {
    /// Builds a profile with `size_mb` split across `num_chunks` chunks as
    /// evenly as possible; leftover elements go to the lowest-indexed chunks.
    pub fn synthetic(name: &str, size_mb: f64, num_chunks: usize, batch_per_device: usize) -> Self {
        assert!(num_chunks > 0, "profile needs at least one chunk");
        let total = (size_mb * BYTES_PER_MB / 4.0).round() as usize;
        Self {
            name: name.to_string(),
            size_mb,
            num_chunks,
            batch_per_device,
            chunk_elems: split_even(total, num_chunks),
        }
    }

    pub fn total_elems(&self) -> usize {
        self.chunk_elems.iter().sum()
    }

    pub fn total_bytes(&self) -> usize {
        self.total_elems() * 4
    }
}

/// Looks up one of the ten evaluated DNNs. Names match case-insensitively;
/// "SqueezeNet" is accepted for the table's "SequeezeNet" spelling.
pub fn build_profile(name: &str) -> Result<ModelProfile, ModelError> {
    let wanted = canonical_name(name);
    TABLE
        .iter()
        .find(|(n, ..)| canonical_name(n) == wanted)
        .map(|&(n, size, chunks, batch)| ModelProfile::synthetic(n, size, chunks, batch))
        .ok_or_else(|| ModelError::NotFound(name.to_string()))
}

pub fn all_profiles() -> Vec<ModelProfile> {
    TABLE
        .iter()
        .map(|&(n, size, chunks, batch)| ModelProfile::synthetic(n, size, chunks, batch))
        .collect()
}

fn canonical_name(name: &str) -> String {
    name.trim()
        .to_ascii_lowercase()
        .replace("squeezenet", "sequeezenet")
}

pub fn split_even(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let a = build_profile("AlexNet").unwrap();
        assert_eq!(
            (a.size_mb, a.num_chunks, a.batch_per_device),
            (232.56, 16, 32)
        );
        let r = build_profile("ResNet-152").unwrap();
        assert_eq!(
            (r.size_mb, r.num_chunks, r.batch_per_device),
            (230.20, 932, 2)
        );
        let s = build_profile("SequeezeNet-v1.1").unwrap();
        assert_eq!(
            (s.size_mb, s.num_chunks, s.batch_per_device),
            (4.71, 52, 32)
        );
    }

    #[test]
    fn aliases_and_unknown_names() {
        assert_eq!(
            build_profile("SqueezeNet-v1.0").unwrap().name,
            "SequeezeNet-v1.0"
        );
        assert_eq!(build_profile("googlenet").unwrap().name, "GoogleNet");
        assert!(matches!(
            build_profile("VGG-16"),
            Err(ModelError::NotFound(_))
        ));
    }

    #[test]
    fn mass_is_conserved_for_every_row() {
        for p in all_profiles() {
            assert_eq!(p.chunk_elems.len(), p.num_chunks);
            let bytes = 4.0 * p.total_elems() as f64;
            assert!(
                (bytes - p.size_mb * BYTES_PER_MB).abs() <= 4.0,
                "{}",
                p.name
            );
            let max = *p.chunk_elems.iter().max().unwrap();
            let min = *p.chunk_elems.iter().min().unwrap();
            assert!(max - min <= 1);
            // remainder sits at the front
            assert!(p.chunk_elems.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn split_even_remainder_goes_first() {
        assert_eq!(split_even(11, 4), vec![3, 3, 3, 2]);
        assert_eq!(split_even(2, 4), vec![1, 1, 0, 0]);
    }
}
