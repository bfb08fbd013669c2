//! Datagram transport: subscription handling and fan-out.

use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use socket2::{Domain, Protocol, Socket, Type};
use tokio::net::UdpSocket;
use tokio::sync::broadcast::error::RecvError;
use tokio::task::JoinHandle;
use usar_core::protocol::MAX_DATAGRAM;

use crate::control::{parse_datagram_control, DatagramControl, OK, PONG};
use crate::hub::Hub;
use crate::registry::ClientRegistry;

/// Socket buffer requested on both ends; the kernel may grant less.
pub const SOCKET_BUFFER: usize = 4 << 20;
const SWEEP_INTERVAL: Duration = Duration::from_millis(500);

/// Binds a UDP socket with enlarged buffers.
pub fn bind_udp(addr: SocketAddr) -> io::Result<UdpSocket> {
    let socket = Socket::new(Domain::for_address(addr), Type::DGRAM, Some(Protocol::UDP))?;
    // Best effort: a smaller buffer only costs burst headroom.
    let _ = socket.set_recv_buffer_size(SOCKET_BUFFER);
    let _ = socket.set_send_buffer_size(SOCKET_BUFFER);
    socket.set_nonblocking(true)?;
    socket.bind(&addr.into())?;
    UdpSocket::from_std(socket.into())
}

pub type UdpRegistry = Arc<Mutex<ClientRegistry<SocketAddr>>>;

/// Running datagram side of the server.
pub struct UdpServer {
    pub local_addr: SocketAddr,
    pub registry: UdpRegistry,
    tasks: Vec<JoinHandle<()>>,
}

impl UdpServer {
    pub async fn start(addr: SocketAddr, hub: &Hub) -> io::Result<Self> {
        let socket = Arc::new(bind_udp(addr)?);
        let local_addr = socket.local_addr()?;
        let registry: UdpRegistry = Arc::new(Mutex::new(ClientRegistry::new()));
        let tasks = vec![
            tokio::spawn(control_loop(socket.clone(), registry.clone())),
            tokio::spawn(send_loop(socket, registry.clone(), hub.clone())),
            tokio::spawn(sweep_loop(registry.clone())),
        ];
        Ok(Self {
            local_addr,
            registry,
            tasks,
        })
    }

    pub fn client_count(&self) -> usize {
        self.registry.lock().expect("registry lock").len()
    }
}

impl Drop for UdpServer {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

async fn control_loop(socket: Arc<UdpSocket>, registry: UdpRegistry) {
    let mut buf = vec![0u8; MAX_DATAGRAM];
    loop {
        let (n, peer) = match socket.recv_from(&mut buf).await {
            Ok(v) => v,
            // ICMP errors from departed clients surface here; keep serving.
            Err(e) => {
                log::debug!("udp recv: {e}");
                continue;
            }
        };
        let now = Instant::now();
        let reply = match parse_datagram_control(&buf[..n]) {
            Some(DatagramControl::Subscribe) => {
                if registry.lock().expect("registry lock").subscribe(peer, now) {
                    log::info!("udp client {peer} subscribed");
                }
                Some(OK)
            }
            Some(DatagramControl::Ping) => {
                registry.lock().expect("registry lock").heartbeat(peer, now);
                Some(PONG)
            }
            Some(DatagramControl::Unsubscribe) => {
                registry.lock().expect("registry lock").unsubscribe(peer);
                Some(OK)
            }
            None => None,
        };
        if let Some(reply) = reply {
            let _ = socket.send_to(reply.as_bytes(), peer).await;
        }
    }
}

async fn send_loop(socket: Arc<UdpSocket>, registry: UdpRegistry, hub: Hub) {
    let mut rx = hub.subscribe();
    loop {
        let frame = match rx.recv().await {
            Ok(f) => f,
            Err(RecvError::Lagged(n)) => {
                log::warn!("udp fan-out fell {n} frames behind");
                continue;
            }
            Err(RecvError::Closed) => return,
        };
        let clients = registry.lock().expect("registry lock").clients();
        for client in clients {
            let mut ok = true;
            for packet in &frame.packets {
                if socket.send_to(packet, client).await.is_err() {
                    ok = false;
                    break;
                }
            }
            if registry.lock().expect("registry lock").record_send(client, ok) {
                log::info!("udp client {client} dropped after repeated send failures");
            }
        }
    }
}

async fn sweep_loop(registry: UdpRegistry) {
    let mut ticker = tokio::time::interval(SWEEP_INTERVAL);
    loop {
        ticker.tick().await;
        for gone in registry.lock().expect("registry lock").evict_stale(Instant::now()) {
            log::info!("udp client {gone} timed out");
        }
    }
}
