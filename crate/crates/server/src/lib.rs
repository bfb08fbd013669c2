//! Live side of the pipeline: acquisition, segmentation dispatch, datagram
//! and WebSocket fan-out, and the measurement session driven by clients.

pub mod actor;
pub mod client;
pub mod config;
pub mod control;
pub mod event_log;
pub mod hub;
pub mod pipeline;
pub mod registry;
pub mod server;
pub mod session;
pub mod udp;
pub mod ws;

pub use actor::{spawn_session, SessionHandle};
pub use client::{ClientFrame, FrameDecoder, UdpStreamClient, WsEvent, WsStreamClient};
pub use config::{ConfigError, ServerConfig};
pub use event_log::EventLog;
pub use hub::{Hub, OutFrame};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineEvent, PipelineOutputs, PipelineSummary};
pub use registry::ClientRegistry;
pub use server::{serve, ServeError, Server};
pub use session::{Command, Phase, SessionError, SessionSnapshot, SessionState};
