use crate::model::{GradientSet, Tensor};
use crate::transport::CommError;

/// Where one gradient chunk lives inside a [`FlatBuffer`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub chunk: usize,
    pub offset: usize,
    pub len: usize,
    pub shape: Vec<usize>,
}

/// All gradient chunks copied into one contiguous buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatBuffer {
    pub data: Vec<f32>,
    pub layout: Vec<Span>,
}

impl FlatBuffer {
    /// Buffer holding a single chunk.
    pub fn from_vec(data: Vec<f32>) -> Self {
        let len = data.len();
        Self {
            data,
            layout: vec![Span {
                chunk: 0,
                offset: 0,
                len,
                shape: vec![len],
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Checks that the spans tile `[0, len)` in chunk order.
    pub fn validate(&self) -> Result<(), CommError> {
        let mut cursor = 0;
        for (i, span) in self.layout.iter().enumerate() {
            if span.chunk != i {
                return Err(CommError::Layout(format!(
                    "span {i} names chunk {}",
                    span.chunk
                )));
            }
            if span.offset != cursor {
                return Err(CommError::Layout(format!(
                    "chunk {i} starts at {} but the previous chunk ended at {cursor}",
                    span.offset
                )));
            }
            if span.shape.iter().product::<usize>() != span.len {
                return Err(CommError::Layout(format!(
                    "chunk {i} shape {:?} does not hold {} elements",
                    span.shape, span.len
                )));
            }
            cursor += span.len;
        }
        if cursor != self.data.len() {
            return Err(CommError::Layout(format!(
                "spans cover {cursor} elements of a {}-element buffer",
                self.data.len()
            )));
        }
        Ok(())
    }
}

pub fn pack(grads: &GradientSet) -> FlatBuffer {
    let mut data = Vec::with_capacity(grads.total_elems());
    let mut layout = Vec::with_capacity(grads.num_chunks());
    for (chunk, t) in grads.chunks.iter().enumerate() {
        layout.push(Span {
            chunk,
            offset: data.len(),
            len: t.len(),
            shape: t.shape().to_vec(),
        });
        data.extend_from_slice(t.data());
    }
    FlatBuffer { data, layout }
}

pub fn unpack(buf: &FlatBuffer) -> Result<GradientSet, CommError> {
    buf.validate()?;
    let chunks = buf
        .layout
        .iter()
        .map(|s| {
            Tensor::new(
                s.shape.clone(),
                buf.data[s.offset..s.offset + s.len].to_vec(),
            )
            .map_err(|e| CommError::Layout(e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    Ok(GradientSet::new(chunks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_profile;

    #[test]
    fn pack_concatenates_in_order() {
        let g = GradientSet::new(vec![
            Tensor::from_vec(vec![1.0, 2.0, 3.0]),
            Tensor::from_vec(vec![4.0, 5.0]),
        ]);
        let b = pack(&g);
        assert_eq!(b.data, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let spans: Vec<_> = b
            .layout
            .iter()
            .map(|s| (s.chunk, s.offset, s.len))
            .collect();
        assert_eq!(spans, vec![(0, 0, 3), (1, 3, 2)]);
        assert_eq!(unpack(&b).unwrap(), g);
    }

    #[test]
    fn single_chunk_is_identity() {
        let t = Tensor::new(vec![2, 2], vec![0.5, -1.0, 2.5, 9.0]).unwrap();
        let g = GradientSet::new(vec![t.clone()]);
        let b = pack(&g);
        assert_eq!(b.data, t.data());
        assert_eq!(unpack(&b).unwrap(), g);
    }

    #[test]
    fn profile_sized_roundtrip_is_bitwise() {
        let p = build_profile("GoogleNet").unwrap();
        assert_eq!(p.num_chunks, 116);
        let mut g = GradientSet::zeros_like_sizes(&p.chunk_elems);
        let mut x = 0x1234_5678u32;
        for c in &mut g.chunks {
            for v in c.data_mut() {
                x ^= x << 13;
                x ^= x >> 17;
                x ^= x << 5;
                *v = f32::from_bits(x & 0xBF7F_FFFF); // finite values only
            }
        }
        let b = pack(&g);
        assert_eq!(b.len(), p.total_elems());
        let back = unpack(&b).unwrap();
        for (a, c) in g.chunks.iter().zip(&back.chunks) {
            assert!(a
                .data()
                .iter()
                .zip(c.data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn corrupt_layouts_are_rejected() {
        let g = GradientSet::new(vec![
            Tensor::from_vec(vec![1.0; 3]),
            Tensor::from_vec(vec![2.0; 2]),
        ]);
        let mut b = pack(&g);
        b.layout[1].offset = 2;
        assert!(matches!(unpack(&b), Err(CommError::Layout(_))));
        let mut b = pack(&g);
        b.layout[1].len = 5;
        b.layout[1].shape = vec![5];
        assert!(matches!(unpack(&b), Err(CommError::Layout(_))));
        let mut b = pack(&g);
        b.layout.swap(0, 1);
        assert!(matches!(unpack(&b), Err(CommError::Layout(_))));
        let mut b = pack(&g);
        b.layout[0].shape = vec![2, 2];
        assert!(matches!(unpack(&b), Err(CommError::Layout(_))));
    }
}
