//! Loopback latency bench.
//!
//! A server streams phantom frames to an in-process datagram client that
//! decodes every frame and measures every pair, the way a viewer would.
//! Stages follow one frame from the acquisition tick to its measured pair:
//!
//! - acquire: tick to source frame in hand.
//! - encode: frame in hand to provider call (channel 0 goes out here), plus
//!   provider result to pair published.
//! - segment: provider call to provider result.
//! - transit: pair published to its last datagram arriving.
//! - decode: last datagram to pair reassembled and aligned.
//! - measure: aligned pair to dimensions computed.
//!
//! The stages tile the path, so their means add up to the end-to-end mean.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io;
use std::net::SocketAddr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;
use usar_core::geometry::measure_mask;
use usar_core::protocol::Channel;
use usar_core::{ClassSelector, View};
use usar_providers::{LatencyModel, PhantomSource, PhantomSpec, ProviderKind};
use usar_server::{EventLog, PipelineConfig, PipelineEvent, Server, UdpStreamClient};

use crate::stats::{mean_std, StageStats};

/// Time the client keeps listening after the pipeline stops.
const DRAIN: Duration = Duration::from_secs(3);
/// Well inside the server's idle timeout.
const HEARTBEAT: Duration = Duration::from_secs(1);

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub duration: Duration,
    pub provider: ProviderKind,
    pub latency: LatencyModel,
    pub max_in_flight: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            fps: 30.0,
            width: 512,
            height: 512,
            duration: Duration::from_secs(10),
            provider: ProviderKind::Oracle { erosion: 0 },
            latency: LatencyModel::ZERO,
            max_in_flight: 64,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn frames(&self) -> u64 {
        (self.duration.as_secs_f64() * self.fps).round().max(1.0) as u64
    }

    /// The default phantom, scaled to the frame size.
    pub fn phantom(&self) -> PhantomSpec {
        let base = PhantomSpec::default();
        let scale = self.width.min(self.height) as f64 / base.width.min(base.height) as f64;
        PhantomSpec {
            width: self.width,
            height: self.height,
            semi_major: base.semi_major * scale,
            semi_minor: base.semi_minor * scale,
            drift_amplitude: base.drift_amplitude * scale,
            seed: self.seed,
            ..base
        }
    }
}

/// How far channel 1 trails channel 0, in frames, measured when each pair
/// arrives.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LagStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: u32,
    pub max: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub provider: String,
    pub target_fps: f64,
    pub width: usize,
    pub height: usize,
    /// Frame rate of channel 0 at the client.
    pub achieved_fps: f64,
    pub frames_sent: u64,
    pub raw_received: usize,
    pub pairs_received: usize,
    pub segment_failures: u64,
    pub segment_skipped: u64,
    /// acquire, encode, segment, transit, decode, measure.
    pub stages: Vec<StageStats>,
    /// Tick to measured pair; the stages tile this.
    pub end_to_end: StageStats,
    /// Tick to pair decoded at the client.
    pub pair_latency: StageStats,
    /// Tick to raw frame decoded at the client.
    pub raw_latency: StageStats,
    pub channel1_lag: LagStats,
}

impl LatencyReport {
    pub fn stage(&self, name: &str) -> Option<&StageStats> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "provider {} at {}x{}, target {} fps, achieved {:.2} fps",
            self.provider, self.width, self.height, self.target_fps, self.achieved_fps
        );
        let _ = writeln!(
            out,
            "frames sent {}, raw received {}, pairs received {}, segment failures {}, skipped {}",
            self.frames_sent,
            self.raw_received,
            self.pairs_received,
            self.segment_failures,
            self.segment_skipped
        );
        let _ = writeln!(out, "{}", StageStats::table_header());
        for s in self
            .stages
            .iter()
            .chain([&self.end_to_end, &self.pair_latency, &self.raw_latency])
        {
            let _ = writeln!(out, "{}", s.table_row());
        }
        let l = &self.channel1_lag;
        let _ = writeln!(
            out,
            "channel-1 lag: {:.2} ± {:.2} frames (min {}, max {}, n={})",
            l.mean, l.std, l.min, l.max, l.count
        );
        out
    }
}

#[derive(Default)]
struct RawTimes {
    tick: Option<Instant>,
    acquired: Option<Instant>,
}

#[derive(Clone, Copy)]
struct SegTimes {
    submitted: Instant,
    segmented: Instant,
    published: Instant,
}

struct PairSeen {
    frame_id: u32,
    arrived: Instant,
    decoded: Instant,
    measured: Instant,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs the bench on loopback ports chosen by the OS.
pub async fn bench_latency(config: &BenchConfig) -> io::Result<LatencyReport> {
    let frames = config.frames();
    let phantom = config.phantom();
    let source = Box::new(PhantomSource::new(phantom.clone()).map_err(io::Error::other)?);
    let provider = config.provider.build(config.latency, config.seed);
    let loopback: SocketAddr = "127.0.0.1:0".parse().expect("address literal");
    let mut server = Server::bind(loopback, loopback, EventLog::disabled()).await?;
    let mut client = UdpStreamClient::connect(server.udp_addr(), phantom.pixel_spacing).await?;

    let (tx, mut rx) = mpsc::unbounded_channel();
    let pipeline = PipelineConfig {
        fps: config.fps,
        max_in_flight: config.max_in_flight,
        max_frames: Some(frames),
    };
    let provider_name = provider.name();
    let mut run = server.start_pipeline(source, provider, pipeline, Some(tx));

    let mut raw_seen: Vec<(u32, Instant)> = Vec::new();
    let mut pairs: Vec<PairSeen> = Vec::new();
    let mut lags: Vec<u32> = Vec::new();
    let mut summary = None;
    let mut stop_at: Option<Instant> = None;
    let mut next_ping = Instant::now() + HEARTBEAT;
    loop {
        if Instant::now() >= next_ping {
            client.ping().await?;
            next_ping += HEARTBEAT;
        }
        let step = Instant::now() + Duration::from_millis(100);
        let deadline = stop_at.map_or(step, |s| s.min(step));
        if let Some(f) = client.next_frame_until(deadline).await? {
            match f.channel {
                Channel::RawImage => raw_seen.push((f.frame_id, f.decoded)),
                Channel::SegmentationPair => {
                    let pair = f.pair.expect("channel 1 frames carry a pair");
                    let _ = measure_mask(&pair.mask, ClassSelector::Union, View::Coronal);
                    let measured = Instant::now();
                    // Once the last raw frame is in, the lag can only shrink.
                    let live = raw_seen.last().is_none_or(|&(id, _)| id + 1 < frames as u32);
                    if live {
                        if let Some(latest) = client.decoder().latest_raw_id() {
                            lags.push(latest.wrapping_sub(f.frame_id));
                        }
                    }
                    pairs.push(PairSeen {
                        frame_id: f.frame_id,
                        arrived: f.arrived,
                        decoded: f.decoded,
                        measured,
                    });
                }
            }
        }
        if summary.is_none() && run.is_finished() {
            summary = Some((&mut run).await.map_err(io::Error::other)?);
            stop_at = Some(Instant::now() + DRAIN);
        }
        if let Some(s) = &summary {
            let complete = raw_seen.len() as u64 >= s.frames && pairs.len() as u64 >= s.segmented;
            if complete || stop_at.is_some_and(|t| Instant::now() >= t) {
                break;
            }
        }
    }
    let summary = summary.expect("loop exits after the pipeline");

    let mut raw_times: HashMap<u32, RawTimes> = HashMap::new();
    let mut seg_times: HashMap<u32, SegTimes> = HashMap::new();
    let mut segment_ms = Vec::new();
    while let Ok(event) = rx.try_recv() {
        match event {
            PipelineEvent::Raw {
                frame_id,
                tick,
                acquired,
                ..
            } => {
                let r = raw_times.entry(frame_id).or_default();
                r.tick = Some(tick);
                r.acquired = Some(acquired);
            }
            PipelineEvent::Segmented {
                frame_id,
                submitted,
                segmented,
                published,
            } => {
                segment_ms.push(ms(segmented - submitted));
                seg_times.insert(
                    frame_id,
                    SegTimes {
                        submitted,
                        segmented,
                        published,
                    },
                );
            }
            PipelineEvent::SegmentFailed { .. } | PipelineEvent::SegmentSkipped { .. } => {}
        }
    }

    let mut acquire = Vec::new();
    let mut encode = Vec::new();
    let mut transit = Vec::new();
    let mut decode = Vec::new();
    let mut measure = Vec::new();
    let mut end_to_end = Vec::new();
    let mut pair_latency = Vec::new();
    for p in &pairs {
        let (Some(raw), Some(seg)) = (raw_times.get(&p.frame_id), seg_times.get(&p.frame_id)) else {
            continue;
        };
        let (Some(tick), Some(acquired)) = (raw.tick, raw.acquired) else {
            continue;
        };
        acquire.push(ms(acquired - tick));
        encode.push(ms((seg.submitted - acquired) + (seg.published - seg.segmented)));
        transit.push(ms(p.arrived.saturating_duration_since(seg.published)));
        decode.push(ms(p.decoded - p.arrived));
        measure.push(ms(p.measured - p.decoded));
        end_to_end.push(ms(p.measured - tick));
        pair_latency.push(ms(p.decoded - tick));
    }
    let raw_latency: Vec<f64> = raw_seen
        .iter()
        .filter_map(|(id, decoded)| Some(ms(*decoded - raw_times.get(id)?.tick?)))
        .collect();

    let achieved_fps = match (raw_seen.first(), raw_seen.last()) {
        (Some(first), Some(last)) if raw_seen.len() > 1 && last.1 > first.1 => {
            (raw_seen.len() - 1) as f64 / (last.1 - first.1).as_secs_f64()
        }
        _ => 0.0,
    };
    let lag_f: Vec<f64> = lags.iter().map(|&l| l as f64).collect();
    let (lag_mean, lag_std) = mean_std(&lag_f);

    Ok(LatencyReport {
        provider: provider_name,
        target_fps: config.fps,
        width: config.width,
        height: config.height,
        achieved_fps,
        frames_sent: summary.frames,
        raw_received: raw_seen.len(),
        pairs_received: pairs.len(),
        segment_failures: summary.failed,
        segment_skipped: summary.skipped,
        stages: vec![
            StageStats::from_samples("acquire", &acquire),
            StageStats::from_samples("encode", &encode),
            StageStats::from_samples("segment", &segment_ms),
            StageStats::from_samples("transit", &transit),
            StageStats::from_samples("decode", &decode),
            StageStats::from_samples("measure", &measure),
        ],
        end_to_end: StageStats::from_samples("end_to_end", &end_to_end),
        pair_latency: StageStats::from_samples("pair_latency", &pair_latency),
        raw_latency: StageStats::from_samples("raw_latency", &raw_latency),
        channel1_lag: LagStats {
            count: lags.len(),
            mean: lag_mean,
            std: lag_std,
            min: lags.iter().copied().min().unwrap_or(0),
            max: lags.iter().copied().max().unwrap_or(0),
        },
    })
}
