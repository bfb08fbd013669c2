//! Datagram wire format for streaming frames and segmentation pairs.
//!
//! Two logical channels share one packet layout. Channel 0 carries raw
//! grayscale frames; channel 1 carries a self-contained pair, the source
//! frame followed by its label mask. Frames are split into fragments of at
//! most [`MAX_PAYLOAD`] bytes, each behind a fixed 22-byte little-endian
//! header:
//!
//! | offset | size | field          |
//! |--------|------|----------------|
//! | 0      | 4    | magic `USAR`   |
//! | 4      | 1    | version (1)    |
//! | 5      | 1    | channel        |
//! | 6      | 1    | pixel format   |
//! | 7      | 1    | flags          |
//! | 8      | 4    | frame id       |
//! | 12     | 2    | width          |
//! | 14     | 2    | height         |
//! | 16     | 2    | fragment index |
//! | 18     | 2    | fragment count |
//! | 20     | 2    | payload length |

mod align;
mod reassembly;
mod stream;
mod wire;

use thiserror::Error;

pub use align::{AlignedPair, Aligner};
pub use reassembly::{
    CompletedFrame, ExpiredFrame, ReassemblyStats, Reassembler, REASSEMBLY_TIMEOUT,
};
pub use stream::{write_stream_frame, StreamDecoder, STREAM_PREFIX_LEN};
pub use wire::{
    decode_packet, encode, fragment_count, frame_payload_len, Channel, Packet, PacketHeader,
    PixelFormat, FLAG_LAST_FRAGMENT, HEADER_LEN, MAGIC, MAX_DATAGRAM, MAX_FRAGMENTS, MAX_PAYLOAD,
    VERSION,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("datagram truncated: need {needed} bytes, have {actual}")]
    Truncated { needed: usize, actual: usize },
    #[error("bounds violation: {0}")]
    BoundsViolation(String),
    #[error("frame needs {0} fragments, limit is 65535")]
    Oversize(usize),
    #[error("bad channel {0}")]
    BadChannel(u8),
}
