use std::sync::Arc;
use std::time::Instant;

use tokio::sync::broadcast;
use tokio_tungstenite::tungstenite::Bytes;
use usar_core::protocol::{encode, write_stream_frame, Channel, ProtocolError};

/// One encoded frame, ready for both transports.
#[derive(Debug)]
pub struct OutFrame {
    pub channel: Channel,
    pub frame_id: u32,
    /// Datagrams in fragment order.
    pub packets: Vec<Vec<u8>>,
    /// The same packets, each behind a u32 LE length, for stream clients.
    pub stream: Bytes,
    pub published: Instant,
}

impl OutFrame {
    pub fn encode(
        frame_id: u32,
        channel: Channel,
        image: &[u8],
        mask: Option<&[u8]>,
        width: usize,
        height: usize,
    ) -> Result<Self, ProtocolError> {
        let too_big = || ProtocolError::BoundsViolation(format!("{width}x{height} exceeds 16-bit size"));
        let w = u16::try_from(width).map_err(|_| too_big())?;
        let h = u16::try_from(height).map_err(|_| too_big())?;
        let packets = encode(frame_id, channel, image, mask, w, h)?;
        let mut stream = Vec::with_capacity(packets.iter().map(|p| p.len() + 4).sum());
        for p in &packets {
            write_stream_frame(p, &mut stream);
        }
        Ok(Self {
            channel,
            frame_id,
            packets,
            stream: Bytes::from(stream),
            published: Instant::now(),
        })
    }
}

/// Fan-out point between the pipeline and the transports.
#[derive(Clone)]
pub struct Hub {
    tx: broadcast::Sender<Arc<OutFrame>>,
}

impl Hub {
    /// `capacity` frames may queue per subscriber before it starts missing
    /// frames.
    pub fn new(capacity: usize) -> Self {
        Self {
            tx: broadcast::channel(capacity).0,
        }
    }

    /// Stamps `frame.published` and hands it to every subscriber.
    pub fn publish(&self, mut frame: OutFrame) -> Arc<OutFrame> {
        frame.published = Instant::now();
        let frame = Arc::new(frame);
        // No subscribers is fine; the stream runs regardless.
        let _ = self.tx.send(frame.clone());
        frame
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<OutFrame>> {
        self.tx.subscribe()
    }
}
