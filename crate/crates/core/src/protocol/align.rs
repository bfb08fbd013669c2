use std::collections::{HashMap, VecDeque};
use std::time::{Duration, Instant};

use super::reassembly::CompletedFrame;
use super::wire::Channel;
use super::ProtocolError;
use crate::mask::{GrayImage, Mask};

const ARRIVAL_HISTORY: usize = 1024;

/// A frame and the mask segmented from that exact frame.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPair {
    pub frame_id: u32,
    pub image: GrayImage,
    pub mask: Mask,
    /// Gap between the raw frame and its segmentation arriving, when the raw
    /// frame was seen first.
    pub segmentation_latency: Option<Duration>,
    pub completed_at: Instant,
}

/// Turns completed channel-1 frames into [`AlignedPair`]s.
///
/// Channel-1 frames embed their own image, so a pair is produced as soon as
/// one completes; channel-0 arrivals only feed the latency measurement.
pub struct Aligner {
    pixel_spacing: f64,
    raw_arrivals: HashMap<u32, Instant>,
    arrival_order: VecDeque<u32>,
    latest_raw: Option<u32>,
}

impl Aligner {
    pub fn new(pixel_spacing: f64) -> Self {
        Self {
            pixel_spacing,
            raw_arrivals: HashMap::new(),
            arrival_order: VecDeque::new(),
            latest_raw: None,
        }
    }

    /// Highest channel-0 frame id seen so far.
    pub fn latest_raw_id(&self) -> Option<u32> {
        self.latest_raw
    }

    pub fn observe(&mut self, frame: CompletedFrame) -> Result<Option<AlignedPair>, ProtocolError> {
        match frame.channel {
            Channel::RawImage => {
                self.record_raw(frame.frame_id, frame.completed_at);
                Ok(None)
            }
            Channel::SegmentationPair => self.pair(frame).map(Some),
        }
    }

    fn record_raw(&mut self, frame_id: u32, at: Instant) {
        if self.raw_arrivals.insert(frame_id, at).is_none() {
            self.arrival_order.push_back(frame_id);
            if self.arrival_order.len() > ARRIVAL_HISTORY {
                if let Some(old) = self.arrival_order.pop_front() {
                    self.raw_arrivals.remove(&old);
                }
            }
        }
        self.latest_raw = Some(self.latest_raw.map_or(frame_id, |l| l.max(frame_id)));
    }

    fn pair(&mut self, frame: CompletedFrame) -> Result<AlignedPair, ProtocolError> {
        let (w, h) = (frame.width as usize, frame.height as usize);
        let plane = w * h;
        if frame.payload.len() != 2 * plane {
            return Err(ProtocolError::BoundsViolation(format!(
                "pair payload of {} bytes does not hold two {w}x{h} planes",
                frame.payload.len()
            )));
        }
        let mut payload = frame.payload;
        let labels = payload.split_off(plane);
        let bad = |e: crate::mask::MaskError| ProtocolError::BoundsViolation(e.to_string());
        let image = GrayImage::new(w, h, payload).map_err(bad)?;
        let mask = Mask::new(w, h, labels, self.pixel_spacing).map_err(bad)?;
        let segmentation_latency = self
            .raw_arrivals
            .get(&frame.frame_id)
            .map(|&raw| frame.completed_at.saturating_duration_since(raw));
        Ok(AlignedPair {
            frame_id: frame.frame_id,
            image,
            mask,
            segmentation_latency,
            completed_at: frame.completed_at,
        })
    }
}
