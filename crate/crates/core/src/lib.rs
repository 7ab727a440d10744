//! Synchronous data-parallel training over ring allreduce.
//!
//! The crate runs the same training loop on real TCP links or on simulated
//! links with virtual time, and ships a timing-only cluster simulator used
//! to study how computation and communication scale on a cluster of
//! low-power devices.

pub mod collectives;
pub mod engine;
pub mod harness;
pub mod model;
pub mod presets;
pub mod transport;
