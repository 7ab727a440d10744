//! iperf-style one-way throughput probe.
//!
//! The client streams fixed-size frames for a set duration, then sends an
//! end marker; the server answers with the byte count it received. The
//! rate is computed from acknowledged bytes only.

use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::frame::{read_frame, write_frame};
use super::{CommError, LinkSampler, NetProfile};

const TAG_DATA: u32 = 0xFFFE_0001;
const TAG_END: u32 = 0xFFFE_0002;
const TAG_ACK: u32 = 0xFFFE_0003;

pub const PROBE_MESSAGE_BYTES: usize = 128 * 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub mbps: f64,
    pub bytes: u64,
    pub elapsed_s: f64,
    /// Set when the link failed before the run completed.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeStats {
    pub mean_mbps: f64,
    pub std_mbps: f64,
    pub runs: Vec<ProbeResult>,
}

pub struct ProbeServer {
    listener: TcpListener,
}

impl ProbeServer {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self, CommError> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener
            .local_addr()
            .expect("bound listener has an address")
    }

    /// Handles one client run and returns the bytes it received.
    pub fn serve_one(&self) -> Result<u64, CommError> {
        let (mut stream, _) = self.listener.accept()?;
        let mut reader = std::io::BufReader::with_capacity(1 << 16, stream.try_clone()?);
        let mut total = 0u64;
        loop {
            match read_frame(&mut reader)? {
                Some(f) if f.tag == TAG_DATA => total += f.payload.len() as u64,
                Some(f) if f.tag == TAG_END => break,
                Some(f) => {
                    return Err(CommError::Protocol(format!(
                        "unexpected probe tag {:#x}",
                        f.tag
                    )))
                }
                None => return Err(CommError::PeerClosed { peer: 0 }),
            }
        }
        write_frame(&mut stream, TAG_ACK, &total.to_be_bytes())?;
        Ok(total)
    }

    /// Serves `runs` client runs back to back, or forever when `None`.
    pub fn serve(&self, runs: Option<usize>) -> Result<(), CommError> {
        let mut done = 0;
        while runs.is_none_or(|n| done < n) {
            self.serve_one()?;
            done += 1;
        }
        Ok(())
    }
}

pub fn tcp_probe_client(server: SocketAddr, duration: Duration) -> Result<ProbeResult, CommError> {
    let mut stream = TcpStream::connect(server)?;
    stream.set_nodelay(true)?;
    let payload = vec![0xA5u8; PROBE_MESSAGE_BYTES];
    let start = Instant::now();
    let mut sent = 0u64;
    while start.elapsed() < duration {
        if write_frame(&mut stream, TAG_DATA, &payload).is_err() {
            return Ok(aborted(sent, start.elapsed().as_secs_f64()));
        }
        sent += payload.len() as u64;
    }
    if write_frame(&mut stream, TAG_END, &[]).is_err() {
        return Ok(aborted(sent, start.elapsed().as_secs_f64()));
    }
    let ack = match read_frame(&mut stream) {
        Ok(Some(f)) if f.tag == TAG_ACK && f.payload.len() == 8 => {
            u64::from_be_bytes(f.payload[..8].try_into().expect("8 bytes"))
        }
        _ => return Ok(aborted(sent, start.elapsed().as_secs_f64())),
    };
    let elapsed = start.elapsed().as_secs_f64();
    Ok(ProbeResult {
        mbps: ack as f64 * 8.0 / (elapsed * 1e6),
        bytes: ack,
        elapsed_s: elapsed,
        partial: false,
    })
}

fn aborted(bytes: u64, elapsed_s: f64) -> ProbeResult {
    ProbeResult {
        mbps: if elapsed_s > 0.0 {
            bytes as f64 * 8.0 / (elapsed_s * 1e6)
        } else {
            0.0
        },
        bytes,
        elapsed_s,
        partial: true,
    }
}

/// Streams `message_bytes` messages over one simulated point-to-point link
/// for `duration_s` of virtual time. `run` selects an independent jitter stream.
pub fn sim_probe(
    profile: &NetProfile,
    duration_s: f64,
    message_bytes: usize,
    run: u64,
) -> ProbeResult {
    let mut link = LinkSampler::new(profile, run);
    let mut uplink_free: f64 = 0.0;
    let mut delivered = 0u64;
    loop {
        let t = link.sample(message_bytes, 2);
        if t.disconnected {
            return ProbeResult {
                mbps: if uplink_free > 0.0 {
                    delivered as f64 * 8.0 / (uplink_free * 1e6)
                } else {
                    0.0
                },
                bytes: delivered,
                elapsed_s: uplink_free,
                partial: true,
            };
        }
        let start = uplink_free;
        if start + t.total() > duration_s {
            break;
        }
        uplink_free = start + t.occupancy_s;
        delivered += message_bytes as u64;
    }
    ProbeResult {
        mbps: delivered as f64 * 8.0 / (duration_s * 1e6),
        bytes: delivered,
        elapsed_s: duration_s,
        partial: false,
    }
}

/// Mean and sample standard deviation over repeated runs.
pub fn probe_stats(runs: Vec<ProbeResult>) -> ProbeStats {
    let n = runs.len();
    let mean = runs.iter().map(|r| r.mbps).sum::<f64>() / n.max(1) as f64;
    let var = if n > 1 {
        runs.iter().map(|r| (r.mbps - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    ProbeStats {
        mean_mbps: mean,
        std_mbps: var.sqrt(),
        runs,
    }
}
