//! Out-of-process segmentation over a TCP stream.
//!
//! The stream carries the datagram packets unchanged, each behind a u32
//! little-endian length. The client sends a raw frame on channel 0 and the
//! bridge answers with a segmentation pair on channel 1 carrying the same
//! frame id. One request is in flight per connection.

use std::io;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use async_trait::async_trait;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::Mutex;
use usar_core::protocol::{
    encode, write_stream_frame, Channel, CompletedFrame, Reassembler, StreamDecoder,
};
use usar_core::{GrayImage, Mask};

use crate::erosion::erode;
use crate::phantom::{phantom_next, PhantomSpec};
use crate::provider::{ProviderError, SegmentRequest, SegmentResult, SegmentationProvider};

const READ_CHUNK: usize = 64 * 1024;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BridgeDiagnostics {
    /// Replies whose frame id did not match the outstanding request.
    pub mismatched_replies: u64,
    /// Replies on the wrong channel or with bad geometry or labels.
    pub bad_replies: u64,
    pub connects: u64,
}

#[derive(Default)]
struct Counters {
    mismatched: AtomicU64,
    bad: AtomicU64,
    connects: AtomicU64,
}

struct Connection {
    stream: TcpStream,
    decoder: StreamDecoder,
    reassembler: Reassembler,
    /// Set while a request is outstanding. A connection found busy was
    /// abandoned mid-request and is not reused.
    busy: bool,
}

/// Client side of the bridge.
pub struct BridgeProvider {
    addr: String,
    conn: Mutex<Option<Connection>>,
    counters: Counters,
}

impl BridgeProvider {
    /// Connects lazily on the first request.
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            conn: Mutex::new(None),
            counters: Counters::default(),
        }
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    pub fn diagnostics(&self) -> BridgeDiagnostics {
        BridgeDiagnostics {
            mismatched_replies: self.counters.mismatched.load(Ordering::Relaxed),
            bad_replies: self.counters.bad.load(Ordering::Relaxed),
            connects: self.counters.connects.load(Ordering::Relaxed),
        }
    }

    async fn connect(&self) -> Result<Connection, ProviderError> {
        let stream = TcpStream::connect(&self.addr)
            .await
            .map_err(|e| ProviderError::Crashed(format!("connect {}: {e}", self.addr)))?;
        stream.set_nodelay(true).ok();
        self.counters.connects.fetch_add(1, Ordering::Relaxed);
        Ok(Connection {
            stream,
            decoder: StreamDecoder::new(),
            reassembler: Reassembler::new(),
            busy: false,
        })
    }

    fn bad(&self, reason: String) -> ProviderError {
        self.counters.bad.fetch_add(1, Ordering::Relaxed);
        ProviderError::BadReply(reason)
    }

    async fn exchange(
        &self,
        conn: &mut Connection,
        request: &SegmentRequest,
    ) -> Result<Mask, ProviderError> {
        let image = &request.image;
        let (w, h) = (image.width(), image.height());
        let (w16, h16) = match (u16::try_from(w), u16::try_from(h)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return Err(ProviderError::BadReply(format!("frame {w}x{h} too large"))),
        };
        let packets = encode(request.frame_id, Channel::RawImage, image.data(), None, w16, h16)
            .map_err(|e| ProviderError::BadReply(e.to_string()))?;
        let mut out = Vec::with_capacity(image.data().len() + packets.len() * 30);
        for p in &packets {
            write_stream_frame(p, &mut out);
        }
        conn.stream.write_all(&out).await.map_err(lost)?;

        let mut chunk = vec![0u8; READ_CHUNK];
        loop {
            while let Some(packet) = conn.decoder.next_packet().map_err(|e| lost_protocol(e.to_string()))? {
                let done = match conn.reassembler.push_datagram(&packet, Instant::now()) {
                    Ok(done) => done,
                    Err(e) => return Err(lost_protocol(e.to_string())),
                };
                let Some(frame) = done else { continue };
                if frame.frame_id != request.frame_id {
                    self.counters.mismatched.fetch_add(1, Ordering::Relaxed);
                    log::warn!(
                        "bridge {}: dropped reply for frame {} while waiting for {}",
                        self.addr,
                        frame.frame_id,
                        request.frame_id
                    );
                    continue;
                }
                return self.reply_mask(frame, w, h, request.pixel_spacing);
            }
            let n = conn.stream.read(&mut chunk).await.map_err(lost)?;
            if n == 0 {
                return Err(ProviderError::Crashed(format!("{} closed the connection", self.addr)));
            }
            conn.decoder.extend(&chunk[..n]);
        }
    }

    fn reply_mask(
        &self,
        frame: CompletedFrame,
        w: usize,
        h: usize,
        spacing: f64,
    ) -> Result<Mask, ProviderError> {
        if frame.channel != Channel::SegmentationPair {
            return Err(self.bad(format!("reply for frame {} on channel 0", frame.frame_id)));
        }
        if (frame.width as usize, frame.height as usize) != (w, h) {
            return Err(self.bad(format!(
                "reply is {}x{}, request was {w}x{h}",
                frame.width, frame.height
            )));
        }
        let labels = frame.payload[w * h..].to_vec();
        Mask::new(w, h, labels, spacing).map_err(|e| self.bad(e.to_string()))
    }
}

fn lost(e: io::Error) -> ProviderError {
    ProviderError::Crashed(e.to_string())
}

fn lost_protocol(reason: String) -> ProviderError {
    ProviderError::Crashed(format!("stream corrupted: {reason}"))
}

#[async_trait]
impl SegmentationProvider for BridgeProvider {
    fn name(&self) -> String {
        format!("bridge:{}", self.addr)
    }

    async fn segment(&self, request: SegmentRequest) -> Result<SegmentResult, ProviderError> {
        let mut guard = self.conn.lock().await;
        if guard.as_ref().is_some_and(|c| c.busy) {
            *guard = None;
        }
        if guard.is_none() {
            *guard = Some(self.connect().await?);
        }
        let conn = guard.as_mut().expect("connection present");
        conn.busy = true;
        match self.exchange(conn, &request).await {
            Ok(mask) => {
                conn.busy = false;
                Ok(SegmentResult {
                    frame_id: request.frame_id,
                    mask,
                })
            }
            Err(e @ ProviderError::Crashed(_)) => {
                *guard = None;
                Err(e)
            }
            Err(e) => {
                conn.busy = false;
                Err(e)
            }
        }
    }
}

/// What a bridge sends back for one frame.
pub struct BridgeReply {
    pub frame_id: u32,
    /// Row-major labels, same size as the request image.
    pub labels: Vec<u8>,
}

/// Segmentation callback for [`serve_bridge`]. `None` sends nothing back.
pub type BridgeHandler = Arc<dyn Fn(u32, &GrayImage) -> Option<BridgeReply> + Send + Sync>;

/// Accepts bridge clients forever, one task per connection.
pub async fn serve_bridge(listener: TcpListener, handler: BridgeHandler) -> io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let handler = handler.clone();
        tokio::spawn(async move {
            if let Err(e) = serve_connection(stream, handler).await {
                log::debug!("bridge client {peer}: {e}");
            }
        });
    }
}

async fn serve_connection(mut stream: TcpStream, handler: BridgeHandler) -> io::Result<()> {
    stream.set_nodelay(true).ok();
    let mut decoder = StreamDecoder::new();
    let mut reassembler = Reassembler::new();
    let mut chunk = vec![0u8; READ_CHUNK];
    loop {
        let n = stream.read(&mut chunk).await?;
        if n == 0 {
            return Ok(());
        }
        decoder.extend(&chunk[..n]);
        while let Some(packet) = decoder
            .next_packet()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?
        {
            let frame = reassembler
                .push_datagram(&packet, Instant::now())
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            let Some(frame) = frame else { continue };
            if frame.channel != Channel::RawImage {
                continue;
            }
            let (w, h) = (frame.width, frame.height);
            let image = GrayImage::new(w as usize, h as usize, frame.payload)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            let Some(reply) = handler(frame.frame_id, &image) else {
                continue;
            };
            let packets = encode(
                reply.frame_id,
                Channel::SegmentationPair,
                image.data(),
                Some(&reply.labels),
                w,
                h,
            )
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
            let mut out = Vec::new();
            for p in &packets {
                write_stream_frame(p, &mut out);
            }
            stream.write_all(&out).await?;
        }
    }
}

/// Replies with an all-background mask for every frame.
pub fn echo_handler() -> BridgeHandler {
    Arc::new(|frame_id, image: &GrayImage| {
        Some(BridgeReply {
            frame_id,
            labels: vec![0; image.data().len()],
        })
    })
}

/// Reference bridge around the phantom oracle: it regenerates the phantom
/// at `t = frame_id` and answers with its ground truth, eroded by `erosion`.
pub fn oracle_handler(spec: PhantomSpec, erosion: u32) -> BridgeHandler {
    Arc::new(move |frame_id, image: &GrayImage| {
        let (_, truth) = phantom_next(&spec, frame_id as u64).ok()?;
        if (truth.width(), truth.height()) != (image.width(), image.height()) {
            return None;
        }
        Some(BridgeReply {
            frame_id,
            labels: erode(&truth, erosion).into_labels(),
        })
    })
}
