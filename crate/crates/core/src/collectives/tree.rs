use super::ring::check_len;
use super::schedule::{pipeline_segments, tree_bcast_tag, tree_reduce_tag};
use crate::transport::{CommError, Transport};

/// In-place SUM allreduce as a pipelined reduce to rank 0 followed by a
/// pipelined broadcast, both along the chain `0 - 1 - ... - K-1`.
///
/// The buffer moves in segments of `segment_elems`, so interior ranks
/// forward segment `i` while segment `i+1` is still arriving.
pub fn tree_allreduce<T: Transport + ?Sized>(
    t: &mut T,
    data: &mut [f32],
    segment_elems: usize,
) -> Result<(), CommError> {
    let k = t.size();
    if k <= 1 {
        return Ok(());
    }
    let rank = t.rank();
    let segs = pipeline_segments(data.len(), segment_elems);

    for (i, seg) in segs.iter().enumerate() {
        let tag = tree_reduce_tag(i);
        if rank + 1 < k {
            let incoming = t.recv_f32(rank + 1, tag)?;
            check_len(rank + 1, seg.len(), incoming.len())?;
            for (d, x) in data[seg.clone()].iter_mut().zip(incoming) {
                *d += x;
            }
        }
        if rank > 0 {
            t.send_f32(rank - 1, tag, &data[seg.clone()])?;
        }
    }

    for (i, seg) in segs.iter().enumerate() {
        let tag = tree_bcast_tag(i);
        if rank > 0 {
            let incoming = t.recv_f32(rank - 1, tag)?;
            check_len(rank - 1, seg.len(), incoming.len())?;
            data[seg.clone()].copy_from_slice(&incoming);
        }
        if rank + 1 < k {
            t.send_f32(rank + 1, tag, &data[seg.clone()])?;
        }
    }
    Ok(())
}
