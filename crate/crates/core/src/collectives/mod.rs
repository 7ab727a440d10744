//! Allreduce over a [`Transport`]: ring, pipelined tree baseline, gradient
//! packing and chunk-wise aggregation.

mod flat;
mod ring;
pub mod schedule;
mod tree;

use serde::{Deserialize, Serialize};

pub use flat::{pack, unpack, FlatBuffer, Span};
pub use ring::ring_allreduce;
pub use schedule::{Op, DEFAULT_SEGMENT_ELEMS};
pub use tree::tree_allreduce;

use crate::model::GradientSet;
use crate::transport::{CommError, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ring,
    Tree,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ring => "ring",
            Algorithm::Tree => "tree",
        }
    }

    /// Per-rank message schedule for an `n`-element allreduce.
    pub fn schedule(self, n: usize, k: usize, segment_elems: usize) -> Vec<Vec<Op>> {
        match self {
            Algorithm::Ring => schedule::ring_schedule(n, k),
            Algorithm::Tree => schedule::tree_schedule(n, k, segment_elems),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ring" | "rar" => Ok(Algorithm::Ring),
            "tree" => Ok(Algorithm::Tree),
            other => Err(format!(
                "unknown algorithm '{other}' (expected ring or tree)"
            )),
        }
    }
}

/// One worker's membership in a group of `K` ranks.
///
/// On transports with virtual time every allreduce invocation is charged
/// `invocation_overhead_s` before any message is sent.
pub struct CommGroup<T: Transport> {
    transport: T,
    invocation_overhead_s: f64,
    segment_elems: usize,
    invocations: usize,
}

impl<T: Transport> CommGroup<T> {
    pub fn new(transport: T) -> Self {
        Self {
            transport,
            invocation_overhead_s: 0.0,
            segment_elems: DEFAULT_SEGMENT_ELEMS,
            invocations: 0,
        }
    }

    pub fn with_invocation_overhead(mut self, secs: f64) -> Self {
        self.invocation_overhead_s = secs.max(0.0);
        self
    }

    pub fn with_segment_elems(mut self, elems: usize) -> Self {
        self.segment_elems = elems.max(1);
        self
    }

    pub fn rank(&self) -> usize {
        self.transport.rank()
    }

    pub fn size(&self) -> usize {
        self.transport.size()
    }

    pub fn segment_elems(&self) -> usize {
        self.segment_elems
    }

    /// Number of allreduce calls issued so far.
    pub fn invocations(&self) -> usize {
        self.invocations
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn into_inner(self) -> T {
        self.transport
    }

    /// In-place SUM over all ranks.
    pub fn allreduce(&mut self, alg: Algorithm, data: &mut [f32]) -> Result<(), CommError> {
        self.invocations += 1;
        if self.size() > 1 {
            self.transport.advance(self.invocation_overhead_s);
        }
        match alg {
            Algorithm::Ring => ring_allreduce(&mut self.transport, data),
            Algorithm::Tree => tree_allreduce(&mut self.transport, data, self.segment_elems),
        }
    }

    pub fn allreduce_buffer(
        &mut self,
        alg: Algorithm,
        buf: &mut FlatBuffer,
    ) -> Result<(), CommError> {
        self.allreduce(alg, &mut buf.data)
    }

    /// Pack, reduce once, unpack.
    pub fn allreduce_packed(
        &mut self,
        alg: Algorithm,
        grads: &GradientSet,
    ) -> Result<GradientSet, CommError> {
        let mut buf = pack(grads);
        self.allreduce_buffer(alg, &mut buf)?;
        unpack(&buf)
    }

    /// One allreduce per chunk, in chunk order.
    pub fn allreduce_chunkwise(
        &mut self,
        alg: Algorithm,
        grads: &mut GradientSet,
    ) -> Result<(), CommError> {
        for chunk in grads.chunks.iter_mut() {
            self.allreduce(alg, chunk.data_mut())?;
        }
        Ok(())
    }
}
