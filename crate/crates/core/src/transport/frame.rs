//! Wire framing shared by every real-mode connection.
//!
//! ```text
//! +---------------+-------------+----------------+------------------+
//! | magic "RTRN"  | tag (u32 BE) | length (u32 BE) | payload (length) |
//! +---------------+-------------+----------------+------------------+
//! ```
//!
//! Float payloads are packed as little-endian IEEE-754 `f32`.

use std::io::{self, Read, Write};

use super::CommError;

pub const MAGIC: [u8; 4] = [0x52, 0x54, 0x52, 0x4E];
pub const HEADER_LEN: usize = 12;
/// Upper bound on a single frame, so a corrupt length cannot trigger a huge allocation.
pub const MAX_PAYLOAD: u32 = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub tag: u32,
    pub payload: Vec<u8>,
}

pub fn encode_header(tag: u32, len: u32) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(&MAGIC);
    h[4..8].copy_from_slice(&tag.to_be_bytes());
    h[8..].copy_from_slice(&len.to_be_bytes());
    h
}

/// Parses a header, returning `(tag, payload length)`.
pub fn decode_header(h: &[u8; HEADER_LEN]) -> Result<(u32, u32), CommError> {
    if h[..4] != MAGIC {
        return Err(CommError::Protocol(format!(
            "bad frame magic {:02x?}",
            &h[..4]
        )));
    }
    let tag = u32::from_be_bytes(h[4..8].try_into().expect("4 bytes"));
    let len = u32::from_be_bytes(h[8..].try_into().expect("4 bytes"));
    if len > MAX_PAYLOAD {
        return Err(CommError::Protocol(format!(
            "frame length {len} exceeds limit"
        )));
    }
    Ok((tag, len))
}

pub fn write_frame<W: Write>(w: &mut W, tag: u32, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&l| l <= MAX_PAYLOAD)
        .ok_or_else(|| {
            io::Error::new(
                io::ErrorKind::InvalidInput,
                "payload too large for one frame",
            )
        })?;
    w.write_all(&encode_header(tag, len))?;
    w.write_all(payload)?;
    w.flush()
}

/// Reads one frame. A clean EOF before the header yields `Ok(None)`.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, CommError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => {
                return Err(CommError::Protocol(
                    "connection closed inside a frame header".into(),
                ))
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let (tag, len) = decode_header(&header)?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => {
            CommError::Protocol("connection closed inside a frame payload".into())
        }
        _ => e.into(),
    })?;
    Ok(Some(Frame { tag, payload }))
}

pub fn encode_f32(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_f32(bytes: &[u8]) -> Result<Vec<f32>, CommError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(CommError::Protocol(format!(
            "float payload of {} bytes is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}
