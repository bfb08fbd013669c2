//! Receiving ends of both transports, for tests, benchmarks and tools.

use std::io;
use std::net::{Ipv4Addr, Ipv6Addr, SocketAddr};
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use tokio::net::{TcpStream, UdpSocket};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};
use usar_core::protocol::{
    AlignedPair, Aligner, Channel, CompletedFrame, Reassembler, StreamDecoder, MAX_DATAGRAM,
};

use crate::control::{OK, PING, PONG, STATE_PREFIX, SUBSCRIBE, UNSUBSCRIBE};
use crate::session::SessionSnapshot;
use crate::udp::bind_udp;

const SUBSCRIBE_ATTEMPTS: usize = 5;
const SUBSCRIBE_WAIT: Duration = Duration::from_millis(500);

/// A frame as a client sees it.
#[derive(Debug)]
pub struct ClientFrame {
    pub channel: Channel,
    pub frame_id: u32,
    /// When the last datagram of the frame arrived.
    pub arrived: Instant,
    /// When the frame was fully decoded (and paired, on channel 1).
    pub decoded: Instant,
    /// Set for channel-1 frames.
    pub pair: Option<AlignedPair>,
    /// Channel-0 pixels.
    pub raw: Option<Vec<u8>>,
}

/// Turns complete datagrams into [`ClientFrame`]s. Shared by both clients.
pub struct FrameDecoder {
    reassembler: Reassembler,
    aligner: Aligner,
    pub malformed: u64,
}

impl FrameDecoder {
    pub fn new(pixel_spacing: f64) -> Self {
        Self {
            reassembler: Reassembler::new(),
            aligner: Aligner::new(pixel_spacing),
            malformed: 0,
        }
    }

    pub fn reassembler(&self) -> &Reassembler {
        &self.reassembler
    }

    /// Highest channel-0 id decoded so far.
    pub fn latest_raw_id(&self) -> Option<u32> {
        self.aligner.latest_raw_id()
    }

    pub fn push(&mut self, datagram: &[u8], now: Instant) -> Option<ClientFrame> {
        self.reassembler.expire(now);
        let frame = match self.reassembler.push_datagram(datagram, now) {
            Ok(Some(f)) => f,
            Ok(None) => return None,
            Err(_) => {
                self.malformed += 1;
                return None;
            }
        };
        self.finish(frame)
    }

    fn finish(&mut self, frame: CompletedFrame) -> Option<ClientFrame> {
        let (channel, frame_id, arrived) = (frame.channel, frame.frame_id, frame.completed_at);
        let raw = (channel == Channel::RawImage).then(|| frame.payload.clone());
        match self.aligner.observe(frame) {
            Ok(pair) => Some(ClientFrame {
                channel,
                frame_id,
                arrived,
                decoded: Instant::now(),
                pair,
                raw,
            }),
            Err(_) => {
                self.malformed += 1;
                None
            }
        }
    }
}

/// Datagram subscriber.
pub struct UdpStreamClient {
    socket: UdpSocket,
    server: SocketAddr,
    decoder: FrameDecoder,
    buf: Vec<u8>,
}

impl UdpStreamClient {
    /// Subscribes to `server`, retrying until it acknowledges.
    pub async fn connect(server: SocketAddr, pixel_spacing: f64) -> io::Result<Self> {
        let local: SocketAddr = if server.is_ipv4() {
            (Ipv4Addr::UNSPECIFIED, 0).into()
        } else {
            (Ipv6Addr::UNSPECIFIED, 0).into()
        };
        let mut client = Self {
            socket: bind_udp(local)?,
            server,
            decoder: FrameDecoder::new(pixel_spacing),
            buf: vec![0; MAX_DATAGRAM],
        };
        for _ in 0..SUBSCRIBE_ATTEMPTS {
            client.send_control(SUBSCRIBE).await?;
            let deadline = Instant::now() + SUBSCRIBE_WAIT;
            while let Some(d) = client.recv_datagram_until(deadline).await? {
                if d == OK.as_bytes() {
                    return Ok(client);
                }
            }
        }
        Err(io::Error::new(io::ErrorKind::TimedOut, "server never acknowledged SUBSCRIBE"))
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    pub fn decoder(&self) -> &FrameDecoder {
        &self.decoder
    }

    pub async fn ping(&self) -> io::Result<()> {
        self.send_control(PING).await
    }

    pub async fn unsubscribe(&self) -> io::Result<()> {
        self.send_control(UNSUBSCRIBE).await
    }

    async fn send_control(&self, line: &str) -> io::Result<()> {
        self.socket.send_to(line.as_bytes(), self.server).await.map(drop)
    }

    /// Next datagram from the server, or `None` once `deadline` passes.
    pub async fn recv_datagram_until(&mut self, deadline: Instant) -> io::Result<Option<Vec<u8>>> {
        loop {
            let recv = self.socket.recv_from(&mut self.buf);
            match tokio::time::timeout_at(deadline.into(), recv).await {
                Err(_) => return Ok(None),
                Ok(Ok((n, from))) if from == self.server => return Ok(Some(self.buf[..n].to_vec())),
                Ok(Ok(_)) => continue,
                Ok(Err(e)) => return Err(e),
            }
        }
    }

    /// Next decoded frame, or `None` once `deadline` passes. Control replies
    /// are skipped.
    pub async fn next_frame_until(&mut self, deadline: Instant) -> io::Result<Option<ClientFrame>> {
        loop {
            let recv = self.socket.recv_from(&mut self.buf);
            let (n, from) = match tokio::time::timeout_at(deadline.into(), recv).await {
                Err(_) => return Ok(None),
                Ok(r) => r?,
            };
            let now = Instant::now();
            if from != self.server {
                continue;
            }
            let d = &self.buf[..n];
            if d == PONG.as_bytes() || d == OK.as_bytes() {
                continue;
            }
            if let Some(frame) = self.decoder.push(d, now) {
                return Ok(Some(frame));
            }
        }
    }
}

/// What a stream-bridge client can receive.
#[derive(Debug)]
pub enum WsEvent {
    Frame(ClientFrame),
    State(SessionSnapshot),
    /// `OK`, `PONG` or `ERR <code>`.
    Reply(String),
}

/// Stream-bridge subscriber, speaking the same protocol as the viewer.
pub struct WsStreamClient {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    stream: StreamDecoder,
    decoder: FrameDecoder,
    /// Binary messages received, in order, for byte-level checks.
    pub keep_bytes: bool,
    pub bytes: Vec<u8>,
    closed: bool,
}

impl WsStreamClient {
    pub async fn connect(server: SocketAddr, pixel_spacing: f64) -> io::Result<Self> {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{server}/"))
            .await
            .map_err(io::Error::other)?;
        Ok(Self {
            ws,
            stream: StreamDecoder::new(),
            decoder: FrameDecoder::new(pixel_spacing),
            keep_bytes: false,
            bytes: Vec::new(),
            closed: false,
        })
    }

    pub fn decoder(&self) -> &FrameDecoder {
        &self.decoder
    }

    /// Whether the server has closed the connection.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub async fn send_line(&mut self, line: &str) -> io::Result<()> {
        self.ws.send(Message::text(line)).await.map_err(io::Error::other)
    }

    pub async fn close(mut self) {
        let _ = self.ws.close(None).await;
    }

    /// Next event, `None` once `deadline` passes or the server hangs up.
    pub async fn next_until(&mut self, deadline: Instant) -> io::Result<Option<WsEvent>> {
        loop {
            // Drain packets already buffered before reading more.
            while let Some(packet) = self.stream.next_packet().map_err(io::Error::other)? {
                if let Some(frame) = self.decoder.push(&packet, Instant::now()) {
                    return Ok(Some(WsEvent::Frame(frame)));
                }
            }
            if self.closed {
                return Ok(None);
            }
            let msg = match tokio::time::timeout_at(deadline.into(), self.ws.next()).await {
                Err(_) => return Ok(None),
                Ok(None) => {
                    self.closed = true;
                    return Ok(None);
                }
                Ok(Some(Err(e))) => {
                    self.closed = true;
                    return Err(io::Error::other(e));
                }
                Ok(Some(Ok(m))) => m,
            };
            match msg {
                Message::Binary(b) => {
                    if self.keep_bytes {
                        self.bytes.extend_from_slice(&b);
                    }
                    self.stream.extend(&b);
                }
                Message::Text(t) => {
                    let t = t.as_str();
                    if let Some(json) = t.strip_prefix(STATE_PREFIX) {
                        let snap = serde_json::from_str(json).map_err(io::Error::other)?;
                        return Ok(Some(WsEvent::State(snap)));
                    }
                    return Ok(Some(WsEvent::Reply(t.to_string())));
                }
                Message::Close(_) => {
                    self.closed = true;
                    return Ok(None);
                }
                _ => {}
            }
        }
    }

    /// Sends a line and waits for its reply, skipping frames and states.
    pub async fn request(&mut self, line: &str, timeout: Duration) -> io::Result<String> {
        self.send_line(line).await?;
        let deadline = Instant::now() + timeout;
        loop {
            match self.next_until(deadline).await? {
                Some(WsEvent::Reply(r)) => return Ok(r),
                Some(_) => {}
                None => return Err(io::Error::new(io::ErrorKind::TimedOut, "no reply")),
            }
        }
    }
}
