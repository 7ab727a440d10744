use std::thread;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringtrain_core::collectives::{pack, schedule, unpack, Algorithm, CommGroup, Op};
use ringtrain_core::model::{build_profile, GradientSet, Tensor};
use ringtrain_core::transport::{
    CommError, Instrumented, NetProfile, SimNetwork, SimTransport, TcpOptions, TcpTransport,
    TraceEvent, Transport,
};

fn quiet_net() -> NetProfile {
    NetProfile {
        base_bandwidth: 1000.0,
        latency: 0.1,
        jitter_frac: 0.0,
        contention_coeff: 0.0,
        disconnect_prob: 0.0,
        seed: 7,
    }
}

/// Runs `f` on every rank of a simulated group and collects the results by rank.
fn on_group<R, F>(k: usize, f: F) -> Vec<R>
where
    R: Send + 'static,
    F: Fn(SimTransport) -> R + Send + Sync + Clone + 'static,
{
    let handles: Vec<_> = SimNetwork::group(&quiet_net(), k)
        .into_iter()
        .map(|t| {
            let f = f.clone();
            thread::spawn(move || f(t))
        })
        .collect();
    handles.into_iter().map(|h| h.join().unwrap()).collect()
}

fn central_sum(inputs: &[Vec<f32>]) -> Vec<f32> {
    let mut out = vec![0.0f32; inputs[0].len()];
    for v in inputs {
        for (o, x) in out.iter_mut().zip(v) {
            *o += *x;
        }
    }
    out
}

fn integer_inputs(k: usize, n: usize) -> Vec<Vec<f32>> {
    (0..k)
        .map(|r| {
            (0..n)
                .map(|i| ((r * 31 + i * 7) % 19) as f32 - 9.0)
                .collect()
        })
        .collect()
}

fn random_inputs(k: usize, n: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect()
}

fn reduce_all(alg: Algorithm, inputs: Vec<Vec<f32>>, segment: usize) -> Vec<Vec<f32>> {
    let k = inputs.len();
    on_group(k, move |t| {
        let mut data = inputs[t.rank()].clone();
        let mut g = CommGroup::new(t).with_segment_elems(segment);
        g.allreduce(alg, &mut data).unwrap();
        data
    })
}

fn assert_close(got: &[f32], want: &[f32], rel: f32) {
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        let scale = w.abs().max(1.0);
        assert!((g - w).abs() <= rel * scale, "got {g} want {w}");
    }
}

#[test]
fn single_rank_is_identity() {
    for alg in [Algorithm::Ring, Algorithm::Tree] {
        let input = vec![vec![1.5f32, -2.0, 3.25]];
        assert_eq!(reduce_all(alg, input.clone(), 2), input);
    }
}

#[test]
fn four_ranks_of_ones_give_fours() {
    for alg in [Algorithm::Ring, Algorithm::Tree] {
        let out = reduce_all(alg, vec![vec![1.0; 8]; 4], 3);
        for v in out {
            assert_eq!(v, vec![4.0; 8]);
        }
    }
}

#[test]
fn uneven_split_matches_central_sum() {
    let inputs = random_inputs(5, 13, 42);
    let want = central_sum(&inputs);
    for alg in [Algorithm::Ring, Algorithm::Tree] {
        for v in reduce_all(alg, inputs.clone(), 4) {
            assert_close(&v, &want, 1e-6);
        }
    }
    let ints = integer_inputs(5, 13);
    let want = central_sum(&ints);
    for alg in [Algorithm::Ring, Algorithm::Tree] {
        for v in reduce_all(alg, ints.clone(), 4) {
            assert_eq!(v, want);
        }
    }
}

#[test]
fn sum_matrix_over_k_and_n() {
    for k in 1..=8usize {
        let mut sizes = vec![1, k.saturating_sub(1), k, k + 1, 1000];
        sizes.dedup();
        for n in sizes {
            let inputs = integer_inputs(k, n);
            let want = central_sum(&inputs);
            for alg in [Algorithm::Ring, Algorithm::Tree] {
                for v in reduce_all(alg, inputs.clone(), 64) {
                    assert_eq!(v, want, "alg={alg} k={k} n={n}");
                }
            }
        }
    }
}

#[test]
fn tree_agrees_with_ring() {
    let inputs = random_inputs(6, 5000, 3);
    let ring = reduce_all(Algorithm::Ring, inputs.clone(), 700);
    let tree = reduce_all(Algorithm::Tree, inputs, 700);
    for (a, b) in ring.iter().zip(&tree) {
        assert_close(a, b, 1e-6);
    }
}

fn traced(alg: Algorithm, k: usize, n: usize, segment: usize) -> Vec<Vec<TraceEvent>> {
    on_group(k, move |t| {
        let mut data = vec![1.0f32; n];
        let mut g = CommGroup::new(Instrumented::new(t)).with_segment_elems(segment);
        g.allreduce(alg, &mut data).unwrap();
        g.into_inner().trace().to_vec()
    })
}

fn ops_as_trace(ops: &[Op]) -> Vec<TraceEvent> {
    // receives carry the size of the matching send, taken from the ring or chain neighbour
    ops.iter()
        .map(|op| match *op {
            Op::Send { to, tag, bytes } => TraceEvent::Send {
                peer: to,
                tag,
                bytes,
            },
            Op::Recv { from, tag } => TraceEvent::Recv {
                peer: from,
                tag,
                bytes: usize::MAX,
            },
        })
        .collect()
}

#[test]
fn ring_sends_exactly_two_k_minus_one_messages() {
    for k in 1..=8 {
        let n = 1000;
        for (rank, trace) in traced(Algorithm::Ring, k, n, 64).iter().enumerate() {
            let sends: Vec<_> = trace
                .iter()
                .filter_map(|e| match e {
                    TraceEvent::Send { bytes, .. } => Some(*bytes),
                    _ => None,
                })
                .collect();
            assert_eq!(sends.len(), 2 * (k - 1), "rank {rank}");
            let total: usize = sends.iter().sum();
            let ideal = 2.0 * n as f64 * 4.0 * (k as f64 - 1.0) / k as f64;
            assert!(
                (total as f64 - ideal).abs() <= 8.0 * k as f64,
                "k={k} total={total}"
            );
        }
    }
}

#[test]
fn instrumented_traces_follow_the_schedules() {
    for alg in [Algorithm::Ring, Algorithm::Tree] {
        for k in [2, 3, 5] {
            let n = 1037;
            let traces = traced(alg, k, n, 200);
            let sched = alg.schedule(n, k, 200);
            for (trace, ops) in traces.iter().zip(&sched) {
                let want = ops_as_trace(ops);
                assert_eq!(trace.len(), want.len());
                for (got, want) in trace.iter().zip(&want) {
                    match (got, want) {
                        (
                            TraceEvent::Recv {
                                peer: a, tag: x, ..
                            },
                            TraceEvent::Recv {
                                peer: b, tag: y, ..
                            },
                        ) => {
                            assert_eq!((a, x), (b, y))
                        }
                        _ => assert_eq!(got, want),
                    }
                }
            }
        }
    }
}

#[test]
fn busiest_tree_rank_sends_more_than_ring() {
    let n = 40_000;
    for k in 3..=6 {
        let ring: usize = traced(Algorithm::Ring, k, n, 4096)
            .iter()
            .map(|t| sent(t))
            .max()
            .unwrap();
        let tree: usize = traced(Algorithm::Tree, k, n, 4096)
            .iter()
            .map(|t| sent(t))
            .max()
            .unwrap();
        assert!(tree > ring, "k={k}");
    }
}

fn sent(trace: &[TraceEvent]) -> usize {
    trace
        .iter()
        .map(|e| match e {
            TraceEvent::Send { bytes, .. } => *bytes,
            _ => 0,
        })
        .sum()
}

fn random_grads(sizes: &[usize], seed: u64) -> GradientSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GradientSet::new(
        sizes
            .iter()
            .map(|&n| Tensor::from_vec((0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()))
            .collect(),
    )
}

#[test]
fn chunkwise_matches_packed_and_central_sums() {
    let sizes = [17usize, 40];
    let k = 3;
    let per_rank: Vec<GradientSet> = (0..k)
        .map(|r| random_grads(&sizes, 100 + r as u64))
        .collect();
    let shared = per_rank.clone();
    let results = on_group(k, move |t| {
        let rank = t.rank();
        let mut g = CommGroup::new(t);
        let mut chunked = shared[rank].clone();
        g.allreduce_chunkwise(Algorithm::Ring, &mut chunked)
            .unwrap();
        let packed = g.allreduce_packed(Algorithm::Ring, &shared[rank]).unwrap();
        (chunked, packed, g.invocations())
    });
    for c in 0..sizes.len() {
        let inputs: Vec<Vec<f32>> = per_rank
            .iter()
            .map(|g| g.chunks[c].data().to_vec())
            .collect();
        let want = central_sum(&inputs);
        for (chunked, packed, invocations) in &results {
            assert_eq!(*invocations, 3);
            assert_close(chunked.chunks[c].data(), &want, 1e-6);
            assert_close(packed.chunks[c].data(), chunked.chunks[c].data(), 1e-6);
        }
    }
}

#[test]
fn single_chunk_chunkwise_equals_packed() {
    let results = on_group(2, |t| {
        let rank = t.rank();
        let grads = random_grads(&[33], rank as u64);
        let mut g = CommGroup::new(t);
        let packed = g.allreduce_packed(Algorithm::Tree, &grads).unwrap();
        let mut chunked = grads.clone();
        g.allreduce_chunkwise(Algorithm::Tree, &mut chunked)
            .unwrap();
        (packed, chunked)
    });
    for (p, c) in results {
        assert_eq!(p, c);
    }
}

#[test]
fn alexnet_chunkwise_issues_sixteen_allreduces() {
    let profile = build_profile("AlexNet").unwrap();
    // scaled-down element counts keep the chunk structure
    let sizes: Vec<usize> = profile
        .chunk_elems
        .iter()
        .map(|&n| n / 10_000 + 1)
        .collect();
    let counts = on_group(2, move |t| {
        let mut grads = GradientSet::zeros_like_sizes(&sizes);
        let mut g = CommGroup::new(Instrumented::new(t));
        g.allreduce_chunkwise(Algorithm::Ring, &mut grads).unwrap();
        (g.invocations(), g.into_inner().sends())
    });
    for (invocations, sends) in counts {
        assert_eq!(invocations, 16);
        assert_eq!(sends, 16 * 2);
    }
}

#[test]
fn sim_and_tcp_give_identical_values() {
    let k = 4;
    let inputs = random_inputs(k, 2311, 9);
    let sim = reduce_all(Algorithm::Ring, inputs.clone(), 512);
    let group = TcpTransport::local_group(k, &TcpOptions::default()).unwrap();
    let handles: Vec<_> = group
        .into_iter()
        .map(|t| {
            let mut data = inputs[t.rank()].clone();
            thread::spawn(move || {
                let mut g = CommGroup::new(t);
                g.allreduce(Algorithm::Ring, &mut data).unwrap();
                data
            })
        })
        .collect();
    let tcp: Vec<Vec<f32>> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    for (a, b) in sim.iter().zip(&tcp) {
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn length_mismatch_is_reported() {
    let results = on_group(2, |t| {
        let n = if t.rank() == 0 { 10 } else { 12 };
        let mut data = vec![1.0f32; n];
        let mut g = CommGroup::new(t);
        g.allreduce(Algorithm::Ring, &mut data)
    });
    assert!(results
        .iter()
        .any(|r| matches!(r, Err(CommError::LengthMismatch { .. }))));
}

#[test]
fn disconnect_names_the_failed_peer() {
    let net = NetProfile {
        disconnect_prob: 1.0,
        ..quiet_net()
    };
    let handles: Vec<_> =
        SimNetwork::group_with_timeout(&net, 3, std::time::Duration::from_secs(5))
            .into_iter()
            .map(|t| {
                thread::spawn(move || {
                    let mut data = vec![1.0f32; 9];
                    CommGroup::new(t).allreduce(Algorithm::Ring, &mut data)
                })
            })
            .collect();
    for (rank, h) in handles.into_iter().enumerate() {
        let err = h.join().unwrap().unwrap_err();
        let peer = err.failed_rank().expect("error names a rank");
        assert!(peer == (rank + 1) % 3 || peer == (rank + 2) % 3, "{err:?}");
    }
}

#[test]
fn pack_round_trip_with_googlenet_layout() {
    let profile = build_profile("GoogleNet").unwrap();
    assert_eq!(profile.num_chunks, 116);
    let grads = random_grads(&profile.chunk_elems, 5);
    let buf = pack(&grads);
    assert_eq!(buf.len(), profile.chunk_elems.iter().sum::<usize>());
    assert_eq!(unpack(&buf).unwrap(), grads);
}

#[test]
fn virtual_overhead_is_charged_per_invocation() {
    let clocks = on_group(2, |t| {
        let mut g = CommGroup::new(t).with_invocation_overhead(0.5);
        let mut grads = GradientSet::zeros_like_sizes(&[0, 0, 0]);
        g.allreduce_chunkwise(Algorithm::Ring, &mut grads).unwrap();
        g.transport().virtual_time().unwrap()
    });
    for c in clocks {
        assert!((1.5..1.6).contains(&c), "{c}");
    }
}

#[test]
fn schedule_lengths_are_consistent() {
    let s = schedule::ring_schedule(10, 4);
    assert!(s.iter().all(|ops| ops.len() == 4 * 3));
    let t = schedule::tree_schedule(10, 4, 3);
    assert_eq!(t[0].len(), 2 * 4);
    assert_eq!(t[1].len(), 4 * 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn allreduce_matches_central_sum(k in 1usize..7, n in 0usize..300, seg in 1usize..64, ring in any::<bool>()) {
        let alg = if ring { Algorithm::Ring } else { Algorithm::Tree };
        let inputs = integer_inputs(k, n);
        let want = central_sum(&inputs);
        for v in reduce_all(alg, inputs, seg) {
            prop_assert_eq!(v, want.clone());
        }
    }

    #[test]
    fn pack_unpack_is_identity(sizes in proptest::collection::vec(0usize..50, 1..8), seed in any::<u64>()) {
        let grads = random_grads(&sizes, seed);
        prop_assert_eq!(unpack(&pack(&grads)).unwrap(), grads);
    }
}
