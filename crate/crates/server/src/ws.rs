//! Stream bridge for browser clients, over WebSocket.
//!
//! Binary messages carry frames as length-prefixed packets, the exact bytes
//! a datagram client would receive, each behind a u32 LE length. Message
//! boundaries carry no meaning; clients treat the binary messages as one
//! byte stream. Text messages carry the control lines of [`crate::control`].

use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::broadcast::error::RecvError;
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;

use crate::actor::SessionHandle;
use crate::control::{err_line, parse_client_line, ClientLine, ERR_BAD_COMMAND, OK, PONG, STATE_PREFIX};
use crate::hub::Hub;
use crate::registry::ClientRegistry;
use crate::session::SessionSnapshot;

const SWEEP_INTERVAL: Duration = Duration::from_millis(500);

pub type WsRegistry = Arc<Mutex<ClientRegistry<u64>>>;

pub struct WsServer {
    pub local_addr: SocketAddr,
    pub registry: WsRegistry,
    task: JoinHandle<()>,
}

impl WsServer {
    pub async fn start(addr: SocketAddr, hub: &Hub, session: SessionHandle) -> io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let local_addr = listener.local_addr()?;
        let registry: WsRegistry = Arc::new(Mutex::new(ClientRegistry::new()));
        let task = tokio::spawn(accept_loop(listener, hub.clone(), session, registry.clone()));
        Ok(Self {
            local_addr,
            registry,
            task,
        })
    }

    pub fn client_count(&self) -> usize {
        self.registry.lock().expect("registry lock").len()
    }
}

impl Drop for WsServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn accept_loop(listener: TcpListener, hub: Hub, session: SessionHandle, registry: WsRegistry) {
    let ids = AtomicU64::new(0);
    let mut sweeper = tokio::time::interval(SWEEP_INTERVAL);
    loop {
        tokio::select! {
            accepted = listener.accept() => {
                let Ok((stream, peer)) = accepted else { continue };
                let id = ids.fetch_add(1, Ordering::Relaxed);
                let (hub, session, registry) = (hub.clone(), session.clone(), registry.clone());
                tokio::spawn(async move {
                    if let Err(e) = serve_client(stream, id, hub, session, registry.clone()).await {
                        log::debug!("ws client {peer}: {e}");
                    }
                    registry.lock().expect("registry lock").unsubscribe(id);
                });
            }
            _ = sweeper.tick() => {
                for gone in registry.lock().expect("registry lock").evict_stale(Instant::now()) {
                    log::info!("ws client {gone} timed out");
                }
            }
        }
    }
}

fn state_line(snapshot: &SessionSnapshot) -> String {
    format!(
        "{STATE_PREFIX}{}",
        serde_json::to_string(snapshot).expect("snapshot serializes")
    )
}

async fn serve_client(
    stream: TcpStream,
    id: u64,
    hub: Hub,
    session: SessionHandle,
    registry: WsRegistry,
) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    stream.set_nodelay(true).ok();
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut incoming) = ws.split();
    let mut frames = hub.subscribe();
    let mut states = session.subscribe();
    registry.lock().expect("registry lock").subscribe(id, Instant::now());
    let mut liveness = tokio::time::interval(SWEEP_INTERVAL);

    let initial = state_line(&states.borrow_and_update());
    sink.send(Message::text(initial)).await?;

    loop {
        tokio::select! {
            frame = frames.recv() => {
                let frame = match frame {
                    Ok(f) => f,
                    Err(RecvError::Lagged(n)) => {
                        log::warn!("ws client {id} fell {n} frames behind");
                        continue;
                    }
                    Err(RecvError::Closed) => return Ok(()),
                };
                let ok = sink.send(Message::Binary(frame.stream.clone())).await.is_ok();
                if registry.lock().expect("registry lock").record_send(id, ok) {
                    log::info!("ws client {id} dropped after repeated send failures");
                    return Ok(());
                }
            }
            msg = incoming.next() => {
                let Some(msg) = msg else { return Ok(()) };
                let text = match msg? {
                    Message::Text(t) => t,
                    Message::Close(_) => return Ok(()),
                    _ => continue,
                };
                registry.lock().expect("registry lock").heartbeat(id, Instant::now());
                let reply = match parse_client_line(text.as_str()) {
                    Ok(ClientLine::Ping) => PONG.to_string(),
                    Ok(ClientLine::Command(cmd)) => match session.command(cmd).await {
                        Ok(_) => OK.to_string(),
                        Err(e) => err_line(e.code()),
                    },
                    Err(_) => err_line(ERR_BAD_COMMAND),
                };
                sink.send(Message::text(reply)).await?;
            }
            changed = states.changed() => {
                if changed.is_err() {
                    return Ok(());
                }
                let line = state_line(&states.borrow_and_update());
                sink.send(Message::text(line)).await?;
            }
            _ = liveness.tick() => {
                if !registry.lock().expect("registry lock").contains(id) {
                    let _ = sink.send(Message::Close(None)).await;
                    return Ok(());
                }
            }
        }
    }
}
