use std::collections::{HashMap, VecDeque};

use super::HarnessError;
use crate::collectives::{Algorithm, Op, DEFAULT_SEGMENT_ELEMS};
use crate::transport::{LinkSampler, NetProfile};

/// Single-threaded discrete-event replay of per-rank message schedules.
///
/// Timing follows the simulated transport exactly: a send starts once the
/// sender's clock and uplink are both free, occupies the uplink for the
/// bandwidth term, and lands one latency later; a receive moves the
/// receiver's clock to the arrival time. Each sender draws from its own
/// seeded stream, so replays are reproducible.
pub struct Des {
    samplers: Vec<LinkSampler>,
}

impl Des {
    pub fn new(net: &NetProfile, k: usize) -> Self {
        Self {
            samplers: (0..k).map(|r| LinkSampler::new(net, r as u64)).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.samplers.len()
    }

    /// Runs `schedule` with every rank starting at time zero; returns each
    /// rank's finishing clock.
    pub fn run(&mut self, schedule: &[Vec<Op>]) -> Result<Vec<f64>, HarnessError> {
        let k = self.samplers.len();
        assert_eq!(schedule.len(), k, "one op list per rank");
        let mut clock = vec![0.0f64; k];
        let mut uplink = vec![0.0f64; k];
        let mut pc = vec![0usize; k];
        let mut queues: Vec<VecDeque<(u32, f64)>> = (0..k * k).map(|_| VecDeque::new()).collect();
        let mut remaining: usize = schedule.iter().map(Vec::len).sum();

        while remaining > 0 {
            let mut progressed = false;
            for r in 0..k {
                while let Some(op) = schedule[r].get(pc[r]) {
                    match *op {
                        Op::Send { to, tag, bytes } => {
                            let t = self.samplers[r].sample(bytes, k);
                            if t.disconnected {
                                return Err(HarnessError::Disconnected { from: r, to });
                            }
                            let start = clock[r].max(uplink[r]);
                            uplink[r] = start + t.occupancy_s;
                            queues[r * k + to].push_back((tag, start + t.total()));
                        }
                        Op::Recv { from, tag } => match queues[from * k + r].pop_front() {
                            Some((got, arrival)) => {
                                if got != tag {
                                    return Err(HarnessError::Schedule(format!(
                                        "rank {r} expected tag {tag:#x} from {from}, got {got:#x}"
                                    )));
                                }
                                clock[r] = clock[r].max(arrival);
                            }
                            None => break,
                        },
                    }
                    pc[r] += 1;
                    remaining -= 1;
                    progressed = true;
                }
            }
            if !progressed {
                let stuck = (0..k).find(|&r| pc[r] < schedule[r].len()).unwrap_or(0);
                return Err(HarnessError::Schedule(format!(
                    "schedule deadlocks at rank {stuck}"
                )));
            }
        }
        Ok(clock)
    }
}

/// Times allreduce invocations of a group of `K` ranks on one network.
///
/// Every invocation is timed from a common start with idle uplinks and
/// contributes the slowest rank's finishing time. On deterministic networks
/// results are memoized by algorithm and length.
pub struct CommModel {
    net: NetProfile,
    k: usize,
    segment_elems: usize,
    des: Des,
    cache: HashMap<(Algorithm, usize), f64>,
}

impl CommModel {
    pub fn new(net: &NetProfile, k: usize) -> Self {
        Self::with_segment(net, k, DEFAULT_SEGMENT_ELEMS)
    }

    pub fn with_segment(net: &NetProfile, k: usize, segment_elems: usize) -> Self {
        Self {
            net: net.clone(),
            k,
            segment_elems,
            des: Des::new(net, k),
            cache: HashMap::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn net(&self) -> &NetProfile {
        &self.net
    }

    pub fn allreduce_time(&mut self, alg: Algorithm, elems: usize) -> Result<f64, HarnessError> {
        if self.k <= 1 {
            return Ok(0.0);
        }
        let cacheable = self.net.is_deterministic();
        if cacheable {
            if let Some(&t) = self.cache.get(&(alg, elems)) {
                return Ok(t);
            }
        }
        let finish = self
            .des
            .run(&alg.schedule(elems, self.k, self.segment_elems))?;
        let t = finish.into_iter().fold(0.0, f64::max);
        if cacheable {
            self.cache.insert((alg, elems), t);
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(bw: f64, latency_ms: f64) -> NetProfile {
        NetProfile {
            base_bandwidth: bw,
            latency: latency_ms,
            jitter_frac: 0.0,
            contention_coeff: 0.0,
            disconnect_prob: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn single_rank_costs_nothing() {
        let mut m = CommModel::new(&net(100.0, 1.0), 1);
        assert_eq!(m.allreduce_time(Algorithm::Ring, 1_000_000).unwrap(), 0.0);
    }

    #[test]
    fn empty_buffer_pays_latency_per_step() {
        for k in [2usize, 5, 9] {
            let mut m = CommModel::new(&net(100.0, 2.0), k);
            let ring = m.allreduce_time(Algorithm::Ring, 0).unwrap();
            assert!(
                (ring - 2.0 * (k - 1) as f64 * 2e-3).abs() < 1e-12,
                "k={k} {ring}"
            );
            let tree = m.allreduce_time(Algorithm::Tree, 0).unwrap();
            assert!(
                (tree - 2.0 * (k - 1) as f64 * 2e-3).abs() < 1e-12,
                "k={k} {tree}"
            );
        }
    }

    #[test]
    fn ring_on_even_split_matches_closed_form() {
        // 2(K-1) steps, each one latency plus one segment of n/K elements
        let (k, n) = (4usize, 4_000_000usize);
        let mut m = CommModel::new(&net(800.0, 0.5), k);
        let want = 2.0 * (k - 1) as f64 * (0.5e-3 + (n / k) as f64 * 4.0 * 8.0 / 800e6);
        let got = m.allreduce_time(Algorithm::Ring, n).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn ring_approaches_bandwidth_limit() {
        let n = 10_000_000usize;
        let mut m = CommModel::new(&net(940.0, 0.0), 138);
        let got = m.allreduce_time(Algorithm::Ring, n).unwrap();
        let limit = 2.0 * n as f64 * 4.0 * 8.0 / 940e6;
        assert!((got / limit - 1.0).abs() < 0.05, "{got} vs {limit}");
    }

    #[test]
    fn pipelined_tree_is_nearly_flat_in_k() {
        let n = 9_830_400usize;
        let t2 = CommModel::new(&net(940.0, 0.25), 2)
            .allreduce_time(Algorithm::Tree, n)
            .unwrap();
        let t16 = CommModel::new(&net(940.0, 0.25), 16)
            .allreduce_time(Algorithm::Tree, n)
            .unwrap();
        assert!(t16 / t2 < 1.5, "{}", t16 / t2);
        assert!(t16 > t2);
    }

    #[test]
    fn contention_slows_shared_medium() {
        let n = 1_000_000usize;
        let calm = CommModel::new(&net(400.0, 2.0), 8)
            .allreduce_time(Algorithm::Ring, n)
            .unwrap();
        let busy_net = net(400.0, 2.0).with_contention(1.0);
        let busy = CommModel::new(&busy_net, 8)
            .allreduce_time(Algorithm::Ring, n)
            .unwrap();
        assert!(busy > 3.0 * calm);
    }

    #[test]
    fn certain_disconnect_is_reported() {
        let mut p = net(100.0, 1.0);
        p.disconnect_prob = 1.0;
        let err = CommModel::new(&p, 3)
            .allreduce_time(Algorithm::Ring, 10)
            .unwrap_err();
        assert!(matches!(err, HarnessError::Disconnected { .. }));
    }

    #[test]
    fn deadlocking_schedule_is_detected() {
        let sched = vec![
            vec![Op::Recv { from: 1, tag: 0 }],
            vec![Op::Recv { from: 0, tag: 0 }],
        ];
        assert!(matches!(
            Des::new(&net(1.0, 0.0), 2).run(&sched),
            Err(HarnessError::Schedule(_))
        ));
    }
}
