//! Length-prefixed packet framing for reliable byte streams.
//!
//! Each packet is preceded by its length as a little-endian `u32`. The
//! packet bytes are exactly the datagram bytes.

use super::wire::{HEADER_LEN, MAX_DATAGRAM};
use super::ProtocolError;

pub const STREAM_PREFIX_LEN: usize = 4;

pub fn write_stream_frame(packet: &[u8], out: &mut Vec<u8>) {
    out.extend_from_slice(&(packet.len() as u32).to_le_bytes());
    out.extend_from_slice(packet);
}

/// Incremental splitter for a length-prefixed stream.
#[derive(Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    start: usize,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend(&mut self, bytes: &[u8]) {
        if self.start > 0 && self.start == self.buf.len() {
            self.buf.clear();
            self.start = 0;
        }
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len() - self.start
    }

    /// Next complete packet, `Ok(None)` if more bytes are needed.
    ///
    /// A length outside `[HEADER_LEN, MAX_DATAGRAM]` poisons the stream; the
    /// caller should drop the connection.
    pub fn next_packet(&mut self) -> Result<Option<Vec<u8>>, ProtocolError> {
        let avail = &self.buf[self.start..];
        if avail.len() < STREAM_PREFIX_LEN {
            return Ok(None);
        }
        let len = u32::from_le_bytes([avail[0], avail[1], avail[2], avail[3]]) as usize;
        if !(HEADER_LEN..=MAX_DATAGRAM).contains(&len) {
            return Err(ProtocolError::BoundsViolation(format!(
                "stream frame length {len}"
            )));
        }
        if avail.len() < STREAM_PREFIX_LEN + len {
            return Ok(None);
        }
        let packet = avail[STREAM_PREFIX_LEN..STREAM_PREFIX_LEN + len].to_vec();
        self.start += STREAM_PREFIX_LEN + len;
        if self.start > 64 * 1024 {
            self.buf.drain(..self.start);
            self.start = 0;
        }
        Ok(Some(packet))
    }
}
