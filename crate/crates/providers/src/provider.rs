use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use usar_core::{GrayImage, Mask};

use crate::erosion::erode;
use crate::latency::LatencyModel;

/// Longest a provider may take for one frame.
pub const PROVIDER_TIMEOUT: Duration = Duration::from_millis(2000);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("no result within {0:?}")]
    Timeout(Duration),
    #[error("provider connection lost: {0}")]
    Crashed(String),
    #[error("empty image")]
    EmptyImage,
    #[error("frame {0} has no ground truth for the oracle provider")]
    NoGroundTruth(u32),
    #[error("invalid provider reply: {0}")]
    BadReply(String),
}

/// One frame to segment.
#[derive(Clone, Debug)]
pub struct SegmentRequest {
    pub frame_id: u32,
    pub image: Arc<GrayImage>,
    /// Only the oracle provider reads this.
    pub ground_truth: Option<Arc<Mask>>,
    pub pixel_spacing: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentResult {
    pub frame_id: u32,
    pub mask: Mask,
}

/// A segmentation backend.
///
/// Calls may overlap; each future resolves independently, so results can
/// finish out of request order.
#[async_trait]
pub trait SegmentationProvider: Send + Sync {
    fn name(&self) -> String;

    async fn segment(&self, request: SegmentRequest) -> Result<SegmentResult, ProviderError>;
}

/// Runs `provider` under [`PROVIDER_TIMEOUT`] and checks the reply against
/// the request.
pub async fn segment(
    provider: &dyn SegmentationProvider,
    request: SegmentRequest,
) -> Result<SegmentResult, ProviderError> {
    segment_within(provider, request, PROVIDER_TIMEOUT).await
}

pub async fn segment_within(
    provider: &dyn SegmentationProvider,
    request: SegmentRequest,
    limit: Duration,
) -> Result<SegmentResult, ProviderError> {
    if request.image.width() == 0 || request.image.height() == 0 {
        return Err(ProviderError::EmptyImage);
    }
    let (frame_id, w, h) = (request.frame_id, request.image.width(), request.image.height());
    let result = tokio::time::timeout(limit, provider.segment(request))
        .await
        .map_err(|_| ProviderError::Timeout(limit))??;
    if result.frame_id != frame_id {
        return Err(ProviderError::BadReply(format!(
            "asked for frame {frame_id}, got {}",
            result.frame_id
        )));
    }
    if (result.mask.width(), result.mask.height()) != (w, h) {
        return Err(ProviderError::BadReply(format!(
            "mask is {}x{}, frame is {w}x{h}",
            result.mask.width(),
            result.mask.height()
        )));
    }
    Ok(result)
}

/// Returns the request's ground truth, optionally eroded, after a simulated
/// inference delay.
pub struct OracleProvider {
    erosion: u32,
    latency: LatencyModel,
    rng: Mutex<ChaCha8Rng>,
}

impl OracleProvider {
    pub fn new(erosion: u32, latency: LatencyModel) -> Self {
        Self::with_seed(erosion, latency, 0)
    }

    pub fn with_seed(erosion: u32, latency: LatencyModel, seed: u64) -> Self {
        Self {
            erosion,
            latency,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn erosion(&self) -> u32 {
        self.erosion
    }

    pub fn latency(&self) -> LatencyModel {
        self.latency
    }
}

#[async_trait]
impl SegmentationProvider for OracleProvider {
    fn name(&self) -> String {
        if self.erosion == 0 {
            "oracle".into()
        } else {
            format!("oracle:erode={}", self.erosion)
        }
    }

    async fn segment(&self, request: SegmentRequest) -> Result<SegmentResult, ProviderError> {
        let delay = if self.latency.is_zero() {
            Duration::ZERO
        } else {
            self.latency.sample(&mut *self.rng.lock().expect("rng lock"))
        };
        let truth = request
            .ground_truth
            .ok_or(ProviderError::NoGroundTruth(request.frame_id))?;
        if !delay.is_zero() {
            tokio::time::sleep(delay).await;
        }
        Ok(SegmentResult {
            frame_id: request.frame_id,
            mask: erode(&truth, self.erosion),
        })
    }
}
