//! Trainable reference network and the synthetic profiles of the evaluated DNNs.

mod mlp;
mod profile;
mod tensor;

pub use mlp::{ForwardCache, Layer, RealModel};
pub use profile::{all_profiles, build_profile, split_even, ModelProfile, BYTES_PER_MB, TABLE};
pub use tensor::{GradientSet, Tensor};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("state error: {0}")]
    State(String),
    #[error("unknown model profile: {0}")]
    NotFound(String),
}
