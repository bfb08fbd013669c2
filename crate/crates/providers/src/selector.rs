//! Command-line forms of sources and providers:
//! `phantom`, `replay:<dir>`, `oracle`, `oracle:erode=<r>`, `bridge:<host:port>`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::bridge::BridgeProvider;
use crate::latency::LatencyModel;
use crate::phantom::PhantomSpec;
use crate::provider::{OracleProvider, SegmentationProvider};
use crate::replay::replay_open;
use crate::source::{FrameSource, PhantomSource, SourceError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct SelectorError(pub String);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SourceKind {
    Phantom,
    Replay(PathBuf),
}

impl FromStr for SourceKind {
    type Err = SelectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "phantom" => Ok(SourceKind::Phantom),
            Some(("replay", dir)) if !dir.is_empty() => Ok(SourceKind::Replay(dir.into())),
            _ => Err(SelectorError(format!(
                "unknown source {s:?}; expected phantom or replay:<dir>"
            ))),
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceKind::Phantom => f.write_str("phantom"),
            SourceKind::Replay(dir) => write!(f, "replay:{}", dir.display()),
        }
    }
}

impl SourceKind {
    /// Opens the source. `spacing` applies to replay entries without a
    /// sidecar value.
    pub fn open(&self, phantom: &PhantomSpec, spacing: f64) -> Result<FrameSource, SourceError> {
        Ok(match self {
            SourceKind::Phantom => Box::new(PhantomSource::new(phantom.clone())?),
            SourceKind::Replay(dir) => Box::new(replay_open(dir)?.with_default_spacing(spacing)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProviderKind {
    Oracle { erosion: u32 },
    Bridge(String),
}

impl FromStr for ProviderKind {
    type Err = SelectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || {
            SelectorError(format!(
                "unknown provider {s:?}; expected oracle, oracle:erode=<r> or bridge:<host:port>"
            ))
        };
        match s.split_once(':') {
            None if s == "oracle" => Ok(ProviderKind::Oracle { erosion: 0 }),
            Some(("oracle", opt)) => {
                let r = opt.strip_prefix("erode=").ok_or_else(bad)?;
                let erosion = r.parse().map_err(|_| bad())?;
                Ok(ProviderKind::Oracle { erosion })
            }
            Some(("bridge", addr)) => {
                let (host, port) = addr.rsplit_once(':').ok_or_else(bad)?;
                if host.is_empty() || port.parse::<u16>().is_err() {
                    return Err(bad());
                }
                Ok(ProviderKind::Bridge(addr.to_string()))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderKind::Oracle { erosion: 0 } => f.write_str("oracle"),
            ProviderKind::Oracle { erosion } => write!(f, "oracle:erode={erosion}"),
            ProviderKind::Bridge(addr) => write!(f, "bridge:{addr}"),
        }
    }
}

impl ProviderKind {
    /// Builds the provider. The latency model applies to the oracle only;
    /// a bridge has its own real delay.
    pub fn build(&self, latency: LatencyModel, seed: u64) -> Arc<dyn SegmentationProvider> {
        match self {
            ProviderKind::Oracle { erosion } => {
                Arc::new(OracleProvider::with_seed(*erosion, latency, seed))
            }
            ProviderKind::Bridge(addr) => Arc::new(BridgeProvider::new(addr.clone())),
        }
    }
}
