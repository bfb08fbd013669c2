//! The two-view measurement workflow.
//!
//! ```text
//! idle --(stream starts)--> streaming
//! streaming --capture_coronal--> coronal_review --accept--> streaming (L kept)
//! streaming --capture_transverse--> transverse_review --accept--> complete
//! any --reset--> streaming (idle stays idle)
//! ```
//!
//! `capture_transverse` needs an accepted coronal length; once L is accepted
//! `capture_coronal` is refused until `reset`. Both review phases accept
//! `adjust_box` and `recompute`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use usar_core::geometry::{extract_dimensions, measure_mask};
use usar_core::{
    ClassSelector, GeometryError, GrayImage, KidneyMeasurement, Mask, MeasurementSource,
    OrientedBox, View,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Streaming,
    CoronalReview,
    TransverseReview,
    Complete,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::Streaming => "streaming",
            Phase::CoronalReview => "coronal_review",
            Phase::TransverseReview => "transverse_review",
            Phase::Complete => "complete",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    CaptureCoronal,
    CaptureTransverse,
    /// Four corners in perimeter order, image pixels.
    AdjustBox([(f64, f64); 4]),
    AcceptMeasurement,
    Recompute,
    Reset,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CaptureCoronal => "capture_coronal",
            Command::CaptureTransverse => "capture_transverse",
            Command::AdjustBox(_) => "adjust_box",
            Command::AcceptMeasurement => "accept_measurement",
            Command::Recompute => "recompute",
            Command::Reset => "reset",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("bad command: {0}")]
pub struct CommandParseError(pub String);

impl FromStr for Command {
    type Err = CommandParseError;

    /// Parses `<name> [args...]`, e.g. `adjust_box 1 2 3 4 5 6 7 8`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut words = s.split_ascii_whitespace();
        let name = words.next().ok_or_else(|| CommandParseError("empty command".into()))?;
        let args: Vec<&str> = words.collect();
        let no_args = |cmd: Command| {
            if args.is_empty() {
                Ok(cmd)
            } else {
                Err(CommandParseError(format!("{name} takes no arguments")))
            }
        };
        match name {
            "capture_coronal" => no_args(Command::CaptureCoronal),
            "capture_transverse" => no_args(Command::CaptureTransverse),
            "accept_measurement" => no_args(Command::AcceptMeasurement),
            "recompute" => no_args(Command::Recompute),
            "reset" => no_args(Command::Reset),
            "adjust_box" => {
                if args.len() != 8 {
                    return Err(CommandParseError(format!(
                        "adjust_box takes 8 numbers, got {}",
                        args.len()
                    )));
                }
                let mut v = [0.0; 8];
                for (slot, arg) in v.iter_mut().zip(&args) {
                    *slot = arg
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| CommandParseError(format!("bad coordinate {arg:?}")))?;
                }
                Ok(Command::AdjustBox([
                    (v[0], v[1]),
                    (v[2], v[3]),
                    (v[4], v[5]),
                    (v[6], v[7]),
                ]))
            }
            other => Err(CommandParseError(format!("unknown command {other:?}"))),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        if let Command::AdjustBox(corners) = self {
            for (x, y) in corners {
                write!(f, " {x} {y}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("{command} is not allowed in {phase}")]
    IllegalTransition { command: &'static str, phase: Phase },
    #[error("no segmented frame available yet")]
    NoFrameAvailable,
    #[error("measurement failed: {0}")]
    MeasurementFailed(GeometryError),
    #[error("corners do not form a box")]
    InvalidBox,
}

impl SessionError {
    /// Short code sent to clients after `ERR`.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::IllegalTransition { .. } => "illegal_transition",
            SessionError::NoFrameAvailable => "no_frame",
            SessionError::MeasurementFailed(_) => "measurement_failed",
            SessionError::InvalidBox => "invalid_box",
        }
    }
}

/// A frame and the mask segmented from it.
#[derive(Clone, Debug)]
pub struct FramePair {
    pub frame_id: u32,
    pub image: Arc<GrayImage>,
    pub mask: Arc<Mask>,
}

/// A frozen frame under review.
#[derive(Clone, Debug)]
pub struct Capture {
    pub view: View,
    pub pair: FramePair,
    pub bbox: OrientedBox,
    pub source: MeasurementSource,
}

impl Capture {
    fn take(view: View, pair: &FramePair) -> Result<Self, SessionError> {
        let (bbox, _) = measure_mask(&pair.mask, ClassSelector::Union, view)
            .map_err(SessionError::MeasurementFailed)?;
        Ok(Self {
            view,
            pair: pair.clone(),
            bbox,
            source: MeasurementSource::Automatic,
        })
    }

    fn dimensions(&self) -> KidneyMeasurement {
        KidneyMeasurement {
            source: self.source,
            ..extract_dimensions(&self.bbox, self.view, self.pair.mask.pixel_spacing())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Transition {
        command: String,
        from: Phase,
        to: Phase,
    },
    Captured {
        view: View,
        frame_id: u32,
        #[serde(rename = "box")]
        bbox: OrientedBox,
    },
    BoxAdjusted {
        #[serde(rename = "box")]
        bbox: OrientedBox,
    },
    Committed {
        view: View,
        measurement: KidneyMeasurement,
    },
}

#[derive(Clone, Debug)]
pub struct SessionState {
    phase: Phase,
    review: Option<Capture>,
    measurement: KidneyMeasurement,
    coronal_accepts: u32,
    transverse_accepts: u32,
    volume_computations: u32,
}

impl Default for SessionState {
    fn default() -> Self {
        Self::new()
    }
}

impl SessionState {
    pub fn new() -> Self {
        Self {
            phase: Phase::Idle,
            review: None,
            measurement: KidneyMeasurement::default(),
            coronal_accepts: 0,
            transverse_accepts: 0,
            volume_computations: 0,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn review(&self) -> Option<&Capture> {
        self.review.as_ref()
    }

    pub fn measurement(&self) -> &KidneyMeasurement {
        &self.measurement
    }

    /// Accepted coronal and transverse measurements since the last reset.
    pub fn accept_counts(&self) -> (u32, u32) {
        (self.coronal_accepts, self.transverse_accepts)
    }

    pub fn volume_computations(&self) -> u32 {
        self.volume_computations
    }

    /// Marks the live stream as running.
    pub fn start_streaming(&mut self) -> Option<SessionEvent> {
        if self.phase != Phase::Idle {
            return None;
        }
        self.phase = Phase::Streaming;
        Some(SessionEvent::Transition {
            command: "stream_started".into(),
            from: Phase::Idle,
            to: Phase::Streaming,
        })
    }

    /// Applies one command. On error the state is unchanged.
    pub fn handle(
        &mut self,
        command: &Command,
        latest: Option<&FramePair>,
    ) -> Result<Vec<SessionEvent>, SessionError> {
        let from = self.phase;
        let illegal = || SessionError::IllegalTransition {
            command: command.name(),
            phase: from,
        };
        let mut events = Vec::new();
        match (command, from) {
            (Command::Reset, _) => {
                self.review = None;
                self.measurement = KidneyMeasurement::default();
                self.coronal_accepts = 0;
                self.transverse_accepts = 0;
                self.volume_computations = 0;
                if from != Phase::Idle {
                    self.phase = Phase::Streaming;
                }
            }
            (Command::CaptureCoronal, Phase::Streaming) if self.coronal_accepts == 0 => {
                let capture = Capture::take(View::Coronal, latest.ok_or(SessionError::NoFrameAvailable)?)?;
                events.push(captured(&capture));
                self.review = Some(capture);
                self.phase = Phase::CoronalReview;
            }
            (Command::CaptureTransverse, Phase::Streaming) if self.coronal_accepts > 0 => {
                let capture =
                    Capture::take(View::Transverse, latest.ok_or(SessionError::NoFrameAvailable)?)?;
                events.push(captured(&capture));
                self.review = Some(capture);
                self.phase = Phase::TransverseReview;
            }
            (Command::AdjustBox(corners), Phase::CoronalReview | Phase::TransverseReview) => {
                let bbox = OrientedBox::from_corners(*corners).map_err(|_| SessionError::InvalidBox)?;
                let review = self.review.as_mut().expect("review phase holds a capture");
                review.bbox = bbox;
                review.source = MeasurementSource::Refined;
                events.push(SessionEvent::BoxAdjusted { bbox });
            }
            (Command::Recompute, Phase::CoronalReview | Phase::TransverseReview) => {
                let review = self.review.as_ref().expect("review phase holds a capture");
                let fresh = Capture::take(review.view, &review.pair)?;
                events.push(SessionEvent::BoxAdjusted { bbox: fresh.bbox });
                self.review = Some(fresh);
            }
            (Command::AcceptMeasurement, Phase::CoronalReview) => {
                let dims = self.review.take().expect("review phase holds a capture").dimensions();
                self.measurement = self.measurement.merge(&dims);
                self.coronal_accepts += 1;
                self.phase = Phase::Streaming;
                events.push(SessionEvent::Committed {
                    view: View::Coronal,
                    measurement: self.measurement,
                });
            }
            (Command::AcceptMeasurement, Phase::TransverseReview) => {
                let review = self.review.as_ref().expect("review phase holds a capture");
                let merged = self
                    .measurement
                    .merge(&review.dimensions())
                    .with_volume()
                    .map_err(SessionError::MeasurementFailed)?;
                self.review = None;
                self.measurement = merged;
                self.transverse_accepts += 1;
                self.volume_computations += 1;
                self.phase = Phase::Complete;
                events.push(SessionEvent::Committed {
                    view: View::Transverse,
                    measurement: self.measurement,
                });
            }
            _ => return Err(illegal()),
        }
        if self.phase != from || matches!(command, Command::Reset) {
            events.insert(
                0,
                SessionEvent::Transition {
                    command: command.name().into(),
                    from,
                    to: self.phase,
                },
            );
        }
        Ok(events)
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            phase: self.phase,
            view: self.review.as_ref().map(|r| r.view),
            frame_id: self.review.as_ref().map(|r| r.pair.frame_id),
            bbox: self.review.as_ref().map(|r| r.bbox),
            pending: self.review.as_ref().map(Capture::dimensions),
            measurement: self.measurement,
        }
    }
}

fn captured(c: &Capture) -> SessionEvent {
    SessionEvent::Captured {
        view: c.view,
        frame_id: c.pair.frame_id,
        bbox: c.bbox,
    }
}

/// What clients see of the session, sent as `STATE <json>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub phase: Phase,
    pub view: Option<View>,
    pub frame_id: Option<u32>,
    #[serde(rename = "box")]
    pub bbox: Option<OrientedBox>,
    /// Dimensions the box under review would commit.
    pub pending: Option<KidneyMeasurement>,
    pub measurement: KidneyMeasurement,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(spacing: f64) -> FramePair {
        // A 41x11 axis-aligned block.
        let (w, h) = (64, 32);
        let mut mask = Mask::background(w, h, spacing).unwrap();
        for y in 10..21 {
            for x in 10..51 {
                mask.set(x, y, 1);
            }
        }
        FramePair {
            frame_id: 7,
            image: Arc::new(GrayImage::filled(w, h, 0)),
            mask: Arc::new(mask),
        }
    }

    fn streaming() -> SessionState {
        let mut s = SessionState::new();
        s.start_streaming().unwrap();
        s
    }

    #[test]
    fn full_workflow() {
        let p = pair(0.5);
        let mut s = streaming();
        s.handle(&Command::CaptureCoronal, Some(&p)).unwrap();
        assert_eq!(s.phase(), Phase::CoronalReview);
        let auto = measure_mask(&p.mask, ClassSelector::Union, View::Coronal).unwrap().0;
        assert_eq!(s.review().unwrap().bbox, auto);

        s.handle(&Command::AcceptMeasurement, None).unwrap();
        assert_eq!(s.phase(), Phase::Streaming);
        assert_eq!(s.measurement().length_mm, Some(41.0 * 0.5));

        assert_eq!(
            s.handle(&Command::CaptureCoronal, Some(&p)),
            Err(SessionError::IllegalTransition {
                command: "capture_coronal",
                phase: Phase::Streaming
            })
        );
        s.handle(&Command::CaptureTransverse, Some(&p)).unwrap();
        let events = s.handle(&Command::AcceptMeasurement, None).unwrap();
        assert_eq!(s.phase(), Phase::Complete);
        assert!(matches!(events[0], SessionEvent::Transition { to: Phase::Complete, .. }));
        let m = s.measurement();
        assert_eq!((m.width_mm, m.thickness_mm), (Some(20.5), Some(5.5)));
        let v = std::f64::consts::PI / 6.0 * 20.5 * 20.5 * 5.5;
        assert!((m.volume_mm3.unwrap() - v).abs() <= 1e-9 * v);
        assert_eq!(s.accept_counts(), (1, 1));

        s.handle(&Command::Reset, None).unwrap();
        assert_eq!(s.phase(), Phase::Streaming);
        assert_eq!(*s.measurement(), KidneyMeasurement::default());
    }

    #[test]
    fn corner_drag_along_major_axis() {
        let p = pair(0.5);
        let mut s = streaming();
        s.handle(&Command::CaptureCoronal, Some(&p)).unwrap();
        let before = s.review().unwrap().bbox;
        let mut corners = before.corners;
        // Corners 1 and 2 form the +major edge; drag both 10 px outward.
        let (sin, cos) = before.theta.sin_cos();
        for i in [1, 2] {
            corners[i].0 += 10.0 * cos;
            corners[i].1 += 10.0 * sin;
        }
        s.handle(&Command::AdjustBox(corners), None).unwrap();
        s.handle(&Command::AcceptMeasurement, None).unwrap();
        let length = s.measurement().length_mm.unwrap();
        assert!((length - (41.0 + 10.0) * 0.5).abs() < 1e-9, "{length}");
        assert_eq!(s.measurement().source, MeasurementSource::Refined);
    }

    #[test]
    fn recompute_restores_automatic_box() {
        let p = pair(1.0);
        let mut s = streaming();
        s.handle(&Command::CaptureCoronal, Some(&p)).unwrap();
        let auto = s.review().unwrap().bbox;
        let moved = OrientedBox::from_parts(5.0, 5.0, 0.3, 20.0, 4.0);
        s.handle(&Command::AdjustBox(moved.corners), None).unwrap();
        assert_eq!(s.review().unwrap().source, MeasurementSource::Refined);
        s.handle(&Command::Recompute, None).unwrap();
        assert_eq!(s.review().unwrap().bbox, auto);
        assert_eq!(s.review().unwrap().source, MeasurementSource::Automatic);
    }

    #[test]
    fn errors_leave_state_alone() {
        let mut idle = SessionState::new();
        assert!(matches!(
            idle.handle(&Command::CaptureTransverse, None),
            Err(SessionError::IllegalTransition { phase: Phase::Idle, .. })
        ));
        idle.handle(&Command::Reset, None).unwrap();
        assert_eq!(idle.phase(), Phase::Idle);

        let mut s = streaming();
        assert_eq!(s.handle(&Command::CaptureCoronal, None), Err(SessionError::NoFrameAvailable));
        let empty = FramePair {
            mask: Arc::new(Mask::background(8, 8, 1.0).unwrap()),
            ..pair(1.0)
        };
        assert_eq!(
            s.handle(&Command::CaptureCoronal, Some(&empty)),
            Err(SessionError::MeasurementFailed(GeometryError::EmptyRegion))
        );
        assert_eq!(s.phase(), Phase::Streaming);

        s.handle(&Command::CaptureCoronal, Some(&pair(1.0))).unwrap();
        let flat = [(0.0, 0.0), (5.0, 0.0), (5.0, 0.0), (0.0, 0.0)];
        assert_eq!(s.handle(&Command::AdjustBox(flat), None), Err(SessionError::InvalidBox));
        assert_eq!(s.review().unwrap().source, MeasurementSource::Automatic);
        for cmd in [Command::CaptureCoronal, Command::CaptureTransverse] {
            assert!(matches!(s.handle(&cmd, Some(&pair(1.0))), Err(SessionError::IllegalTransition { .. })));
        }
    }

    #[test]
    fn command_text_round_trip() {
        let c: Command = "adjust_box 1 2 3.5 4 5 6 7 -8".parse().unwrap();
        assert_eq!(
            c,
            Command::AdjustBox([(1.0, 2.0), (3.5, 4.0), (5.0, 6.0), (7.0, -8.0)])
        );
        assert_eq!(c.to_string().parse::<Command>().unwrap(), c);
        for bad in ["", "adjust_box 1 2", "adjust_box 1 2 3 4 5 6 7 nan", "reset now", "fly"] {
            assert!(bad.parse::<Command>().is_err(), "{bad}");
        }
        assert_eq!("  reset ".parse::<Command>(), Ok(Command::Reset));
    }

    #[test]
    fn snapshot_serializes() {
        let mut s = streaming();
        s.handle(&Command::CaptureCoronal, Some(&pair(0.5))).unwrap();
        let json = serde_json::to_value(s.snapshot()).unwrap();
        assert_eq!(json["phase"], "coronal_review");
        assert_eq!(json["view"], "coronal");
        assert_eq!(json["box"]["extent_major"], 41.0);
        assert_eq!(json["pending"]["length_mm"], 20.5);
    }
}
