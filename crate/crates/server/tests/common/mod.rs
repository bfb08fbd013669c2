#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;

use usar_providers::{FrameSource, LatencyModel, OracleProvider, PhantomSource, PhantomSpec};
use usar_server::{EventLog, Server};

pub const SPACING: f64 = 0.35;

/// Small enough that a raw frame is five datagrams.
pub fn small_phantom() -> PhantomSpec {
    PhantomSpec {
        width: 96,
        height: 64,
        semi_major: 28.0,
        semi_minor: 13.0,
        drift_amplitude: 2.0,
        noise: 0.1,
        pixel_spacing: SPACING,
        seed: 3,
        ..Default::default()
    }
}

pub fn phantom_source() -> FrameSource {
    Box::new(PhantomSource::new(small_phantom()).unwrap())
}

pub fn oracle(mean_ms: f64, std_ms: f64) -> Arc<OracleProvider> {
    Arc::new(OracleProvider::with_seed(0, LatencyModel::new(mean_ms, std_ms).unwrap(), 11))
}

pub async fn local_server() -> Server {
    let any: SocketAddr = "127.0.0.1:0".parse().unwrap();
    Server::bind(any, any, EventLog::disabled()).await.unwrap()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
