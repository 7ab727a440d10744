use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use super::{CommError, LinkSampler, NetProfile, Transport};

#[derive(Debug)]
struct SimMessage {
    tag: u32,
    /// `None` marks a link that dropped while carrying this message.
    payload: Option<Vec<u8>>,
    arrival: f64,
}

/// Shared mailboxes for one simulated group.
#[derive(Debug)]
pub struct SimNetwork {
    size: usize,
    mailboxes: Mutex<Vec<VecDeque<SimMessage>>>,
    arrived: Condvar,
}

/// One rank's endpoint on a [`SimNetwork`].
///
/// Payloads are delivered for real; timing is virtual. A message sent at
/// virtual time `t` starts when the sender's uplink is free, occupies it for
/// the jittered bandwidth term, and arrives one latency later. `recv`
/// advances the receiver's clock to the arrival time. Every rank counts as
/// active on the shared medium, so contention uses the group size.
#[derive(Debug)]
pub struct SimTransport {
    rank: usize,
    net: Arc<SimNetwork>,
    sampler: LinkSampler,
    clock: f64,
    uplink_free: f64,
    dead: Vec<bool>,
    timeout: Duration,
}

impl SimNetwork {
    /// Creates `size` connected endpoints; endpoint `r` has rank `r`.
    pub fn group(profile: &NetProfile, size: usize) -> Vec<SimTransport> {
        Self::group_with_timeout(profile, size, Duration::from_secs(30))
    }

    pub fn group_with_timeout(
        profile: &NetProfile,
        size: usize,
        timeout: Duration,
    ) -> Vec<SimTransport> {
        assert!(size >= 1, "group needs at least one rank");
        let net = Arc::new(SimNetwork {
            size,
            mailboxes: Mutex::new((0..size * size).map(|_| VecDeque::new()).collect()),
            arrived: Condvar::new(),
        });
        (0..size)
            .map(|rank| SimTransport {
                rank,
                net: Arc::clone(&net),
                sampler: LinkSampler::new(profile, rank as u64),
                clock: 0.0,
                uplink_free: 0.0,
                dead: vec![false; size],
                timeout,
            })
            .collect()
    }
}

impl SimTransport {
    pub fn clock(&self) -> f64 {
        self.clock
    }

    fn slot(&self, src: usize, dst: usize) -> usize {
        src * self.net.size + dst
    }
}

impl Transport for SimTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.net.size
    }

    fn send(&mut self, peer: usize, tag: u32, payload: &[u8]) -> Result<(), CommError> {
        if peer >= self.net.size || peer == self.rank {
            return Err(CommError::InvalidPeer(peer));
        }
        if self.dead[peer] {
            return Err(CommError::Disconnected { peer });
        }
        let t = self.sampler.sample(payload.len(), self.net.size);
        let start = self.clock.max(self.uplink_free);
        self.uplink_free = start + t.occupancy_s;
        let msg = SimMessage {
            tag,
            payload: (!t.disconnected).then(|| payload.to_vec()),
            arrival: start + t.total(),
        };
        let slot = self.slot(self.rank, peer);
        self.net.mailboxes.lock().expect("sim mailbox poisoned")[slot].push_back(msg);
        self.net.arrived.notify_all();
        if t.disconnected {
            self.dead[peer] = true;
            return Err(CommError::Disconnected { peer });
        }
        Ok(())
    }

    fn recv(&mut self, peer: usize, tag: u32) -> Result<Vec<u8>, CommError> {
        if peer >= self.net.size || peer == self.rank {
            return Err(CommError::InvalidPeer(peer));
        }
        if self.dead[peer] {
            return Err(CommError::Disconnected { peer });
        }
        let slot = self.slot(peer, self.rank);
        let deadline = Instant::now() + self.timeout;
        let mut boxes = self.net.mailboxes.lock().expect("sim mailbox poisoned");
        let msg = loop {
            if let Some(m) = boxes[slot].pop_front() {
                break m;
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(CommError::Timeout {
                    peer,
                    after_s: self.timeout.as_secs_f64(),
                });
            }
            boxes = self
                .net
                .arrived
                .wait_timeout(boxes, deadline - now)
                .expect("sim mailbox poisoned")
                .0;
        };
        drop(boxes);
        self.clock = self.clock.max(msg.arrival);
        let Some(payload) = msg.payload else {
            self.dead[peer] = true;
            return Err(CommError::Disconnected { peer });
        };
        if msg.tag != tag {
            return Err(CommError::TagMismatch {
                peer,
                expected: tag,
                got: msg.tag,
            });
        }
        Ok(payload)
    }

    fn virtual_time(&self) -> Option<f64> {
        Some(self.clock)
    }

    fn advance(&mut self, secs: f64) {
        debug_assert!(secs >= 0.0);
        self.clock += secs.max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    fn profile(jitter: f64, drop: f64) -> NetProfile {
        NetProfile {
            base_bandwidth: 8.0,
            latency: 1.0,
            jitter_frac: jitter,
            contention_coeff: 0.0,
            disconnect_prob: drop,
            seed: 9,
        }
    }

    #[test]
    fn delivery_charges_latency_plus_bandwidth() {
        let mut g = SimNetwork::group(&profile(0.0, 0.0), 2);
        let mut b = g.pop().unwrap();
        let mut a = g.pop().unwrap();
        // 1 MB at 8 Mbps = 1 s, plus 1 ms
        a.send(1, 5, &vec![7u8; 1_000_000]).unwrap();
        let got = b.recv(0, 5).unwrap();
        assert_eq!(got.len(), 1_000_000);
        assert!((b.clock() - 1.001).abs() < 1e-12);
        assert_eq!(a.clock(), 0.0);
        // second message queues behind the first on the uplink
        a.send(1, 6, &vec![0u8; 1_000_000]).unwrap();
        b.recv(0, 6).unwrap();
        assert!((b.clock() - 2.001).abs() < 1e-12);
    }

    #[test]
    fn tag_mismatch_and_invalid_peer() {
        let mut g = SimNetwork::group(&profile(0.0, 0.0), 2);
        let mut b = g.pop().unwrap();
        let mut a = g.pop().unwrap();
        a.send(1, 1, b"x").unwrap();
        assert!(matches!(
            b.recv(0, 2),
            Err(CommError::TagMismatch {
                peer: 0,
                expected: 2,
                got: 1
            })
        ));
        assert!(matches!(a.send(0, 1, b""), Err(CommError::InvalidPeer(0))));
        assert!(matches!(a.send(5, 1, b""), Err(CommError::InvalidPeer(5))));
    }

    #[test]
    fn certain_disconnect_surfaces_on_both_sides() {
        let mut g = SimNetwork::group(&profile(0.0, 1.0), 2);
        let mut b = g.pop().unwrap();
        let mut a = g.pop().unwrap();
        assert_eq!(a.send(1, 1, b"x"), Err(CommError::Disconnected { peer: 1 }));
        assert_eq!(b.recv(0, 1), Err(CommError::Disconnected { peer: 0 }));
    }

    #[test]
    fn recv_times_out() {
        let mut g =
            SimNetwork::group_with_timeout(&profile(0.0, 0.0), 2, Duration::from_millis(50));
        let mut b = g.pop().unwrap();
        assert!(matches!(
            b.recv(0, 1),
            Err(CommError::Timeout { peer: 0, .. })
        ));
    }

    #[test]
    fn virtual_durations_ignore_thread_timing() {
        let run = || {
            let g = SimNetwork::group(&profile(0.4, 0.0), 3);
            let handles: Vec<_> = g
                .into_iter()
                .map(|mut t| {
                    thread::spawn(move || {
                        let r = t.rank();
                        for step in 0..20u32 {
                            t.send((r + 1) % 3, step, &vec![0u8; 1000 * (r + 1)])
                                .unwrap();
                            t.recv((r + 2) % 3, step).unwrap();
                            t.advance(0.01);
                        }
                        t.clock()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap())
                .collect::<Vec<f64>>()
        };
        let first = run();
        for _ in 0..3 {
            assert_eq!(run(), first);
        }
    }
}
