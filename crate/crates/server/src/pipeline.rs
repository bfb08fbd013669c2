//! Acquisition and dispatch.
//!
//! Each tick pulls one source frame, publishes it on channel 0 right away
//! and hands it to the provider on a separate task. Provider results are
//! published on channel 1 together with their source image whenever they
//! finish, in any order. Channel 0 never waits for the provider.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::json;
use tokio::sync::{mpsc, watch, Semaphore};
use tokio::task::JoinSet;
use tokio::time::MissedTickBehavior;
use usar_core::protocol::Channel;
use usar_providers::{
    segment, FrameSource, ProviderError, SegmentRequest, SegmentationProvider, SourceFrame,
};

use crate::actor::SessionHandle;
use crate::event_log::EventLog;
use crate::hub::{Hub, OutFrame};
use crate::session::FramePair;

/// Timing of one frame, for instrumentation.
#[derive(Clone, Debug)]
pub enum PipelineEvent {
    Raw {
        frame_id: u32,
        tick: Instant,
        acquired: Instant,
        published: Instant,
    },
    Segmented {
        frame_id: u32,
        submitted: Instant,
        segmented: Instant,
        published: Instant,
    },
    SegmentFailed {
        frame_id: u32,
        error: ProviderError,
    },
    /// The in-flight cap was reached; the frame went out on channel 0 only.
    SegmentSkipped { frame_id: u32 },
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub fps: f64,
    pub max_in_flight: usize,
    pub max_frames: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fps: 30.0,
            max_in_flight: 32,
            max_frames: None,
        }
    }
}

/// Where the pipeline's output goes.
pub struct PipelineOutputs {
    pub hub: Hub,
    pub latest: watch::Sender<Option<FramePair>>,
    pub session: Option<SessionHandle>,
    pub events: Option<mpsc::UnboundedSender<PipelineEvent>>,
    pub log: EventLog,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PipelineSummary {
    pub frames: u64,
    pub segmented: u64,
    pub failed: u64,
    pub skipped: u64,
    pub source_errors: u64,
}

struct Shared {
    hub: Hub,
    latest: watch::Sender<Option<FramePair>>,
    events: Option<mpsc::UnboundedSender<PipelineEvent>>,
    log: EventLog,
}

impl Shared {
    fn emit(&self, event: PipelineEvent) {
        if let Some(tx) = &self.events {
            let _ = tx.send(event);
        }
    }
}

/// Runs until the source is exhausted (or `max_frames`), then waits for
/// outstanding provider calls.
pub async fn run_pipeline(
    mut source: FrameSource,
    provider: Arc<dyn SegmentationProvider>,
    config: PipelineConfig,
    outputs: PipelineOutputs,
) -> PipelineSummary {
    let PipelineOutputs {
        hub,
        latest,
        session,
        events,
        log,
    } = outputs;
    let shared = Arc::new(Shared {
        hub,
        latest,
        events,
        log,
    });
    let permits = Arc::new(Semaphore::new(config.max_in_flight.max(1)));
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(1.0 / config.fps));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let mut tasks = JoinSet::new();
    let mut summary = PipelineSummary::default();
    let mut frame_id: u32 = 0;
    let mut started = false;

    loop {
        if config.max_frames.is_some_and(|n| summary.frames >= n) {
            break;
        }
        ticker.tick().await;
        let tick = Instant::now();
        let (back, item) = tokio::task::spawn_blocking(move || {
            let item = source.next();
            (source, item)
        })
        .await
        .expect("source thread");
        source = back;
        let acquired = Instant::now();
        let frame = match item {
            None => break,
            Some(Ok(frame)) => frame,
            Some(Err(e)) => {
                summary.source_errors += 1;
                log::warn!("source: {e}");
                shared.log.record(json!({ "event": "source_error", "error": e.to_string() }));
                continue;
            }
        };
        if !started {
            started = true;
            if let Some(s) = &session {
                s.stream_started().await;
            }
        }

        let id = frame_id;
        frame_id = frame_id.wrapping_add(1);
        summary.frames += 1;
        let SourceFrame {
            image,
            ground_truth,
            pixel_spacing,
            ..
        } = frame;
        let (w, h) = (image.width(), image.height());
        let out = match OutFrame::encode(id, Channel::RawImage, image.data(), None, w, h) {
            Ok(out) => shared.hub.publish(out),
            Err(e) => {
                summary.source_errors += 1;
                shared.log.record(json!({ "event": "encode_error", "frame_id": id, "error": e.to_string() }));
                continue;
            }
        };
        shared.emit(PipelineEvent::Raw {
            frame_id: id,
            tick,
            acquired,
            published: out.published,
        });
        shared.log.record(json!({
            "event": "frame",
            "channel": 0,
            "frame_id": id,
            "tick_us": shared.log.micros(tick),
            "acquired_us": shared.log.micros(acquired),
            "published_us": shared.log.micros(out.published),
            "packets": out.packets.len(),
        }));

        let Ok(permit) = permits.clone().try_acquire_owned() else {
            summary.skipped += 1;
            shared.emit(PipelineEvent::SegmentSkipped { frame_id: id });
            shared.log.record(json!({ "event": "segment_skipped", "frame_id": id }));
            continue;
        };
        let request = SegmentRequest {
            frame_id: id,
            image: Arc::new(image),
            ground_truth: ground_truth.map(Arc::new),
            pixel_spacing,
        };
        let provider = provider.clone();
        let shared = shared.clone();
        tasks.spawn(async move {
            let _permit = permit;
            segment_one(provider.as_ref(), request, &shared).await
        });
        while let Some(done) = tasks.try_join_next() {
            tally(&mut summary, done);
        }
    }
    while let Some(done) = tasks.join_next().await {
        tally(&mut summary, done);
    }
    shared.log.record(json!({
        "event": "pipeline_finished",
        "frames": summary.frames,
        "segmented": summary.segmented,
        "failed": summary.failed,
        "skipped": summary.skipped,
    }));
    summary
}

fn tally(summary: &mut PipelineSummary, done: Result<bool, tokio::task::JoinError>) {
    match done {
        Ok(true) => summary.segmented += 1,
        _ => summary.failed += 1,
    }
}

async fn segment_one(
    provider: &dyn SegmentationProvider,
    request: SegmentRequest,
    shared: &Shared,
) -> bool {
    let id = request.frame_id;
    let image = request.image.clone();
    let submitted = Instant::now();
    let result = segment(provider, request).await;
    let segmented = Instant::now();
    let mask = match result {
        Ok(r) => r.mask,
        Err(error) => {
            log::warn!("frame {id}: {error}");
            shared.log.record(json!({
                "event": "segment_failed",
                "frame_id": id,
                "error": error.to_string(),
            }));
            shared.emit(PipelineEvent::SegmentFailed { frame_id: id, error });
            return false;
        }
    };
    let out = match OutFrame::encode(
        id,
        Channel::SegmentationPair,
        image.data(),
        Some(mask.labels()),
        image.width(),
        image.height(),
    ) {
        Ok(out) => shared.hub.publish(out),
        Err(e) => {
            shared.log.record(json!({ "event": "encode_error", "frame_id": id, "error": e.to_string() }));
            return false;
        }
    };
    let pair = FramePair {
        frame_id: id,
        image,
        mask: Arc::new(mask),
    };
    // A late result for an older frame must not replace a newer one.
    shared.latest.send_if_modified(|slot| {
        let newer = slot
            .as_ref()
            .is_none_or(|cur| id.wrapping_sub(cur.frame_id) < 1 << 31);
        if newer {
            *slot = Some(pair);
        }
        newer
    });
    shared.emit(PipelineEvent::Segmented {
        frame_id: id,
        submitted,
        segmented,
        published: out.published,
    });
    shared.log.record(json!({
        "event": "frame",
        "channel": 1,
        "frame_id": id,
        "submitted_us": shared.log.micros(submitted),
        "segmented_us": shared.log.micros(segmented),
        "published_us": shared.log.micros(out.published),
        "packets": out.packets.len(),
    }));
    true
}
