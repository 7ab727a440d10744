//! Message schedules of the allreduce algorithms.
//!
//! The real collectives and the timing simulator both derive their message
//! order from the functions here, so a simulated duration always describes
//! the exact sequence of sends and receives the real code performs.

use std::ops::Range;

use crate::model::split_even;

/// Default pipeline segment for the tree baseline: 1 MiB of `f32`.
pub const DEFAULT_SEGMENT_ELEMS: usize = 256 * 1024;

const RING_TAG: u32 = 0x1000_0000;
const TREE_REDUCE_TAG: u32 = 0x2000_0000;
const TREE_BCAST_TAG: u32 = 0x3000_0000;
const TAG_INDEX_MASK: u32 = 0x0FFF_FFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Send { to: usize, tag: u32, bytes: usize },
    Recv { from: usize, tag: u32 },
}

/// Ring segment `s` spans `ceil(n/K)` elements for `s < n mod K`, else `floor(n/K)`.
pub fn ring_segments(n: usize, k: usize) -> Vec<Range<usize>> {
    let mut start = 0;
    split_even(n, k)
        .into_iter()
        .map(|len| {
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Consecutive pipeline segments of at most `segment_elems`; an empty
/// buffer still travels as one empty segment.
pub fn pipeline_segments(n: usize, segment_elems: usize) -> Vec<Range<usize>> {
    assert!(segment_elems > 0);
    if n == 0 {
        return vec![0..0];
    }
    (0..n.div_ceil(segment_elems))
        .map(|i| i * segment_elems..((i + 1) * segment_elems).min(n))
        .collect()
}

pub fn ring_tag(step: usize) -> u32 {
    RING_TAG | (step as u32 & TAG_INDEX_MASK)
}

pub fn tree_reduce_tag(segment: usize) -> u32 {
    TREE_REDUCE_TAG | (segment as u32 & TAG_INDEX_MASK)
}

pub fn tree_bcast_tag(segment: usize) -> u32 {
    TREE_BCAST_TAG | (segment as u32 & TAG_INDEX_MASK)
}

/// Segment index rank `rank` sends at scatter-reduce step `step`; it
/// receives `send_index - 1` (mod K) from its predecessor.
pub fn ring_reduce_index(rank: usize, step: usize, k: usize) -> usize {
    (rank + k - step % k) % k
}

/// Segment index rank `rank` sends at allgather step `step`; it receives
/// `send_index - 1` (mod K).
pub fn ring_gather_index(rank: usize, step: usize, k: usize) -> usize {
    (rank + 1 + k - step % k) % k
}

/// Per-rank op lists of the ring allreduce on `n` elements.
pub fn ring_schedule(n: usize, k: usize) -> Vec<Vec<Op>> {
    let segs = ring_segments(n, k);
    (0..k)
        .map(|rank| {
            if k == 1 {
                return Vec::new();
            }
            let next = (rank + 1) % k;
            let prev = (rank + k - 1) % k;
            let mut ops = Vec::with_capacity(4 * (k - 1));
            for step in 0..k - 1 {
                let s = ring_reduce_index(rank, step, k);
                ops.push(Op::Send {
                    to: next,
                    tag: ring_tag(step),
                    bytes: segs[s].len() * 4,
                });
                ops.push(Op::Recv {
                    from: prev,
                    tag: ring_tag(step),
                });
            }
            for step in 0..k - 1 {
                let s = ring_gather_index(rank, step, k);
                ops.push(Op::Send {
                    to: next,
                    tag: ring_tag(k - 1 + step),
                    bytes: segs[s].len() * 4,
                });
                ops.push(Op::Recv {
                    from: prev,
                    tag: ring_tag(k - 1 + step),
                });
            }
            ops
        })
        .collect()
}

/// Per-rank op lists of the pipelined chain reduce + broadcast.
pub fn tree_schedule(n: usize, k: usize, segment_elems: usize) -> Vec<Vec<Op>> {
    let segs = pipeline_segments(n, segment_elems);
    (0..k)
        .map(|rank| {
            if k == 1 {
                return Vec::new();
            }
            let mut ops = Vec::with_capacity(4 * segs.len());
            for (i, seg) in segs.iter().enumerate() {
                if rank + 1 < k {
                    ops.push(Op::Recv {
                        from: rank + 1,
                        tag: tree_reduce_tag(i),
                    });
                }
                if rank > 0 {
                    ops.push(Op::Send {
                        to: rank - 1,
                        tag: tree_reduce_tag(i),
                        bytes: seg.len() * 4,
                    });
                }
            }
            for (i, seg) in segs.iter().enumerate() {
                if rank > 0 {
                    ops.push(Op::Recv {
                        from: rank - 1,
                        tag: tree_bcast_tag(i),
                    });
                }
                if rank + 1 < k {
                    ops.push(Op::Send {
                        to: rank + 1,
                        tag: tree_bcast_tag(i),
                        bytes: seg.len() * 4,
                    });
                }
            }
            ops
        })
        .collect()
}

/// Bytes each rank puts on the wire.
pub fn bytes_sent_per_rank(schedule: &[Vec<Op>]) -> Vec<usize> {
    schedule
        .iter()
        .map(|ops| {
            ops.iter()
                .map(|op| match *op {
                    Op::Send { bytes, .. } => bytes,
                    Op::Recv { .. } => 0,
                })
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uneven_ring_segments() {
        assert_eq!(ring_segments(13, 5), vec![0..3, 3..6, 6..9, 9..11, 11..13]);
        assert_eq!(ring_segments(2, 4), vec![0..1, 1..2, 2..2, 2..2]);
    }

    #[test]
    fn pipeline_segments_cover_buffer() {
        assert_eq!(pipeline_segments(10, 4), vec![0..4, 4..8, 8..10]);
        assert_eq!(pipeline_segments(0, 4), vec![0..0]);
        assert_eq!(pipeline_segments(4, 4), vec![0..4]);
    }

    #[test]
    fn ring_sends_two_k_minus_one_messages() {
        for k in 1..=9 {
            let sched = ring_schedule(1000, k);
            for ops in &sched {
                let sends = ops.iter().filter(|o| matches!(o, Op::Send { .. })).count();
                assert_eq!(sends, 2 * (k - 1));
            }
        }
    }

    #[test]
    fn ring_bytes_per_rank_match_closed_form() {
        let n = 1000;
        for k in 2..=8 {
            let bytes = bytes_sent_per_rank(&ring_schedule(n, k));
            let ideal = 2.0 * n as f64 * 4.0 * (k - 1) as f64 / k as f64;
            for b in bytes {
                // each step moves at most one element more than n/K
                assert!((b as f64 - ideal).abs() <= 2.0 * 4.0 * (k - 1) as f64);
            }
        }
    }

    #[test]
    fn busiest_tree_rank_outsends_ring_for_k_at_least_three() {
        let n = 100_000;
        for k in 2..=12 {
            let ring = *bytes_sent_per_rank(&ring_schedule(n, k))
                .iter()
                .max()
                .unwrap();
            let tree = *bytes_sent_per_rank(&tree_schedule(n, k, DEFAULT_SEGMENT_ELEMS))
                .iter()
                .max()
                .unwrap();
            if k >= 3 {
                assert!(ring < tree, "k={k}: ring {ring} tree {tree}");
            } else {
                assert_eq!(ring, tree);
            }
        }
    }

    #[test]
    fn ring_indices_match_textbook_rotation() {
        // after K-1 reduce steps rank r owns segment r+1
        let k = 5;
        for r in 0..k {
            let last_recv = (ring_reduce_index(r, k - 2, k) + k - 1) % k;
            assert_eq!(last_recv, (r + 1) % k);
            assert_eq!(ring_gather_index(r, 0, k), (r + 1) % k);
        }
    }
}
