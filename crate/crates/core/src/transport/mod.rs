//! Point-to-point message transports.
//!
//! Two implementations share the [`Transport`] contract: [`TcpTransport`]
//! moves frames over real sockets, [`SimTransport`] delivers them through
//! in-memory mailboxes and charges virtual time from a [`NetProfile`].
//! Collectives are written once against the trait.

mod frame;
mod instrument;
mod net_profile;
mod probe;
mod sim;
mod tcp;

pub use frame::{
    decode_f32, decode_header, encode_f32, encode_header, read_frame, write_frame, Frame,
    HEADER_LEN, MAGIC,
};
pub use instrument::{Instrumented, TraceEvent};
pub use net_profile::{nominal_transfer_time, LinkSampler, NetProfile, Transfer};
pub use probe::{probe_stats, sim_probe, tcp_probe_client, ProbeResult, ProbeServer, ProbeStats};
pub use sim::{SimNetwork, SimTransport};
pub use tcp::{Coordinator, TcpOptions, TcpTransport};

use std::io;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CommError {
    #[error("timed out after {after_s:.1}s waiting for rank {peer}")]
    Timeout { peer: usize, after_s: f64 },
    #[error("rank {peer} closed the connection")]
    PeerClosed { peer: usize },
    #[error("link to rank {peer} dropped")]
    Disconnected { peer: usize },
    #[error("tag mismatch from rank {peer}: expected {expected:#x}, got {got:#x}")]
    TagMismatch {
        peer: usize,
        expected: u32,
        got: u32,
    },
    #[error("length mismatch from rank {peer}: expected {expected} elements, got {got}")]
    LengthMismatch {
        peer: usize,
        expected: usize,
        got: usize,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("corrupt buffer layout: {0}")]
    Layout(String),
    #[error("no such peer rank {0}")]
    InvalidPeer(usize),
    #[error("rendezvous failed: {0}")]
    Rendezvous(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<io::Error> for CommError {
    fn from(e: io::Error) -> Self {
        CommError::Io(e.to_string())
    }
}

impl CommError {
    /// Rank whose failure caused this error, when one is known.
    pub fn failed_rank(&self) -> Option<usize> {
        match *self {
            CommError::Timeout { peer, .. }
            | CommError::PeerClosed { peer }
            | CommError::Disconnected { peer }
            | CommError::TagMismatch { peer, .. }
            | CommError::LengthMismatch { peer, .. } => Some(peer),
            CommError::InvalidPeer(p) => Some(p),
            _ => None,
        }
    }
}

/// Blocking, tagged point-to-point messaging between ranks of one group.
///
/// Messages from one peer are delivered in send order; `recv` fails with
/// [`CommError::TagMismatch`] when the next message carries another tag.
/// `send` never waits for the receiver to post a matching `recv`.
pub trait Transport: Send {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;
    fn send(&mut self, peer: usize, tag: u32, payload: &[u8]) -> Result<(), CommError>;
    fn recv(&mut self, peer: usize, tag: u32) -> Result<Vec<u8>, CommError>;

    /// Current virtual time in seconds, for transports that keep one.
    fn virtual_time(&self) -> Option<f64> {
        None
    }

    /// Charges local (non-communication) work to the virtual clock.
    fn advance(&mut self, _secs: f64) {}

    fn send_f32(&mut self, peer: usize, tag: u32, values: &[f32]) -> Result<(), CommError> {
        self.send(peer, tag, &encode_f32(values))
    }

    fn recv_f32(&mut self, peer: usize, tag: u32) -> Result<Vec<f32>, CommError> {
        decode_f32(&self.recv(peer, tag)?)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn rank(&self) -> usize {
        (**self).rank()
    }
    fn size(&self) -> usize {
        (**self).size()
    }
    fn send(&mut self, peer: usize, tag: u32, payload: &[u8]) -> Result<(), CommError> {
        (**self).send(peer, tag, payload)
    }
    fn recv(&mut self, peer: usize, tag: u32) -> Result<Vec<u8>, CommError> {
        (**self).recv(peer, tag)
    }
    fn virtual_time(&self) -> Option<f64> {
        (**self).virtual_time()
    }
    fn advance(&mut self, secs: f64) {
        (**self).advance(secs)
    }
}
