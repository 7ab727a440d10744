use super::schedule::{ring_gather_index, ring_reduce_index, ring_segments, ring_tag};
use crate::transport::{CommError, Transport};

/// In-place SUM allreduce around the ring `r -> r+1`.
///
/// Runs `K-1` scatter-reduce steps followed by `K-1` allgather steps; every
/// rank sends exactly `2(K-1)` messages.
pub fn ring_allreduce<T: Transport + ?Sized>(t: &mut T, data: &mut [f32]) -> Result<(), CommError> {
    let k = t.size();
    if k <= 1 {
        return Ok(());
    }
    let rank = t.rank();
    let next = (rank + 1) % k;
    let prev = (rank + k - 1) % k;
    let segs = ring_segments(data.len(), k);

    for step in 0..k - 1 {
        let send = ring_reduce_index(rank, step, k);
        let recv = (send + k - 1) % k;
        t.send_f32(next, ring_tag(step), &data[segs[send].clone()])?;
        let incoming = t.recv_f32(prev, ring_tag(step))?;
        let target = &mut data[segs[recv].clone()];
        check_len(prev, target.len(), incoming.len())?;
        for (d, x) in target.iter_mut().zip(incoming) {
            *d += x;
        }
    }

    for step in 0..k - 1 {
        let send = ring_gather_index(rank, step, k);
        let recv = (send + k - 1) % k;
        let tag = ring_tag(k - 1 + step);
        t.send_f32(next, tag, &data[segs[send].clone()])?;
        let incoming = t.recv_f32(prev, tag)?;
        let target = &mut data[segs[recv].clone()];
        check_len(prev, target.len(), incoming.len())?;
        target.copy_from_slice(&incoming);
    }
    Ok(())
}

pub(crate) fn check_len(peer: usize, expected: usize, got: usize) -> Result<(), CommError> {
    if expected == got {
        Ok(())
    } else {
        Err(CommError::LengthMismatch {
            peer,
            expected,
            got,
        })
    }
}
