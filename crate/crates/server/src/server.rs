//! Wiring: transports, session and pipeline around one hub.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;

use serde_json::json;
use thiserror::Error;
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use usar_providers::{FrameSource, SegmentationProvider, SourceError};

use crate::actor::{spawn_session, SessionHandle};
use crate::config::{ConfigError, ServerConfig};
use crate::event_log::EventLog;
use crate::hub::Hub;
use crate::pipeline::{run_pipeline, PipelineConfig, PipelineEvent, PipelineOutputs, PipelineSummary};
use crate::session::FramePair;
use crate::udp::UdpServer;
use crate::ws::WsServer;

/// Frames a slow subscriber may fall behind before it starts missing some.
const HUB_CAPACITY: usize = 256;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("{what}: {source}")]
    Io { what: String, source: io::Error },
}

fn io_err(what: impl Into<String>) -> impl FnOnce(io::Error) -> ServeError {
    let what = what.into();
    move |source| ServeError::Io { what, source }
}

/// Listening transports and a session, ready for a pipeline.
pub struct Server {
    pub hub: Hub,
    pub udp: UdpServer,
    pub ws: WsServer,
    pub session: SessionHandle,
    latest: Option<watch::Sender<Option<FramePair>>>,
    log: EventLog,
}

impl Server {
    /// Binds both transports. Port 0 picks a free port.
    pub async fn bind(udp_addr: SocketAddr, ws_addr: SocketAddr, log: EventLog) -> io::Result<Self> {
        let hub = Hub::new(HUB_CAPACITY);
        let (latest, latest_rx) = watch::channel(None);
        let session = spawn_session(latest_rx, log.clone());
        let udp = UdpServer::start(udp_addr, &hub).await?;
        let ws = WsServer::start(ws_addr, &hub, session.clone()).await?;
        log.record(json!({
            "event": "listening",
            "udp": udp.local_addr.to_string(),
            "ws": ws.local_addr.to_string(),
        }));
        Ok(Self {
            hub,
            udp,
            ws,
            session,
            latest: Some(latest),
            log,
        })
    }

    pub fn udp_addr(&self) -> SocketAddr {
        self.udp.local_addr
    }

    pub fn ws_addr(&self) -> SocketAddr {
        self.ws.local_addr
    }

    /// Starts streaming. A server runs one pipeline.
    ///
    /// # Panics
    /// If called twice.
    pub fn start_pipeline(
        &mut self,
        source: FrameSource,
        provider: Arc<dyn SegmentationProvider>,
        config: PipelineConfig,
        events: Option<mpsc::UnboundedSender<PipelineEvent>>,
    ) -> JoinHandle<PipelineSummary> {
        let latest = self.latest.take().expect("pipeline already started");
        let outputs = PipelineOutputs {
            hub: self.hub.clone(),
            latest,
            session: Some(self.session.clone()),
            events,
            log: self.log.clone(),
        };
        tokio::spawn(run_pipeline(source, provider, config, outputs))
    }
}

/// Runs a server from its configuration until the source ends or the
/// process is interrupted.
pub async fn serve(config: ServerConfig) -> Result<PipelineSummary, ServeError> {
    config.validate()?;
    let log = match &config.event_log {
        Some(path) => EventLog::open(path).map_err(io_err(format!("event log {}", path.display())))?,
        None => EventLog::disabled(),
    };
    let source = config.source.open(&config.phantom, config.pixel_spacing)?;
    let provider = config.provider.build(config.latency, config.seed);
    let mut server = Server::bind(config.udp_addr(), config.ws_addr(), log)
        .await
        .map_err(io_err("bind"))?;
    log::info!(
        "streaming {} via {} at {} fps; udp {} ws {}",
        config.source,
        provider.name(),
        config.fps,
        server.udp_addr(),
        server.ws_addr()
    );
    let pipeline = PipelineConfig {
        fps: config.fps,
        max_in_flight: config.max_in_flight,
        max_frames: config.frames,
    };
    let mut run = server.start_pipeline(source, provider, pipeline, None);
    tokio::select! {
        done = &mut run => Ok(done.expect("pipeline task")),
        _ = tokio::signal::ctrl_c() => {
            log::info!("interrupted");
            run.abort();
            Ok(PipelineSummary::default())
        }
    }
}
