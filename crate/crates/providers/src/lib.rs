//! Frame sources and segmentation providers.
//!
//! Sources yield frames: an analytic kidney [`phantom`] or a [`replay`]
//! directory. Providers turn a frame into a label mask: the ground-truth
//! [`provider::OracleProvider`] with optional erosion and simulated delay,
//! or an external process behind the TCP [`bridge`].

pub mod bridge;
pub mod erosion;
pub mod latency;
pub mod phantom;
pub mod provider;
pub mod replay;
pub mod selector;
pub mod source;

pub use bridge::{serve_bridge, BridgeDiagnostics, BridgeHandler, BridgeProvider, BridgeReply};
pub use erosion::erode;
pub use latency::LatencyModel;
pub use phantom::{phantom_next, ArtifactMode, PhantomSpec};
pub use provider::{
    segment, OracleProvider, ProviderError, SegmentRequest, SegmentResult, SegmentationProvider,
    PROVIDER_TIMEOUT,
};
pub use replay::{replay_open, ReplayMeta, ReplaySource};
pub use selector::{ProviderKind, SourceKind};
pub use source::{FrameSource, PhantomSource, SourceError, SourceFrame};
