//! Random command sequences checked against a hand-written reference of
//! the measurement workflow. Shared by the session tests and the acceptance
//! suite.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use usar_core::{GrayImage, Mask};
use usar_server::session::{FramePair, SessionError, SessionState};
use usar_server::{Command, Phase};

const SPACING: f64 = 0.5;
const BLOCK: (usize, usize) = (41, 11);

fn pair() -> FramePair {
    let (w, h) = (64, 32);
    let mut mask = Mask::background(w, h, SPACING).unwrap();
    for y in 10..10 + BLOCK.1 {
        for x in 5..5 + BLOCK.0 {
            mask.set(x, y, 1);
        }
    }
    FramePair {
        frame_id: 7,
        image: Arc::new(GrayImage::filled(w, h, 0)),
        mask: Arc::new(mask),
    }
}

#[derive(Clone, Debug)]
pub enum Step {
    Command(Command),
    /// A box whose extents the reference knows.
    Adjust { major: f64, minor: f64, cmd: Command },
}

fn rotated_box(cx: f64, cy: f64, theta: f64, e1: f64, e2: f64) -> [(f64, f64); 4] {
    let (s, c) = theta.sin_cos();
    let (hx, hy) = (e1 / 2.0, e2 / 2.0);
    let at = |u: f64, v: f64| (cx + c * u - s * v, cy + s * u + c * v);
    [at(-hx, -hy), at(hx, -hy), at(hx, hy), at(-hx, hy)]
}

pub fn random_step(rng: &mut impl Rng) -> (Step, bool) {
    let with_frame = rng.random_bool(0.9);
    let step = match rng.random_range(0..9) {
        0 | 1 => Step::Command(Command::CaptureCoronal),
        2 | 3 => Step::Command(Command::CaptureTransverse),
        4 | 5 => Step::Command(Command::AcceptMeasurement),
        6 => Step::Command(Command::Recompute),
        7 => Step::Command(Command::Reset),
        _ => {
            if rng.random_bool(0.2) {
                let p = (rng.random_range(0.0..60.0), rng.random_range(0.0..30.0));
                Step::Command(Command::AdjustBox([p, p, p, p]))
            } else {
                let e1 = rng.random_range(1.0..60.0);
                let e2 = rng.random_range(1.0..60.0);
                let corners = rotated_box(
                    rng.random_range(0.0..64.0),
                    rng.random_range(0.0..32.0),
                    rng.random_range(-PI..PI),
                    e1,
                    e2,
                );
                Step::Adjust {
                    major: e1.max(e2),
                    minor: e1.min(e2),
                    cmd: Command::AdjustBox(corners),
                }
            }
        }
    };
    (step, with_frame)
}

/// The workflow as the reference sees it.
#[derive(Default)]
struct Reference {
    phase: Option<Phase>,
    /// (major, minor) extents in pixels of the box under review.
    review: Option<(f64, f64)>,
    length: Option<f64>,
    coronal_done: bool,
    dims: Option<(f64, f64, f64)>,
}

impl Reference {
    fn phase(&self) -> Phase {
        self.phase.unwrap_or(Phase::Streaming)
    }

    /// Expected acceptance of a step.
    fn apply(&mut self, step: &Step, with_frame: bool) -> bool {
        let auto = (BLOCK.0 as f64, BLOCK.1 as f64);
        let phase = self.phase();
        let in_review = matches!(phase, Phase::CoronalReview | Phase::TransverseReview);
        let next = match step {
            Step::Command(Command::Reset) => {
                *self = Reference::default();
                return true;
            }
            Step::Command(Command::CaptureCoronal)
                if phase == Phase::Streaming && !self.coronal_done && with_frame =>
            {
                self.review = Some(auto);
                Phase::CoronalReview
            }
            Step::Command(Command::CaptureTransverse)
                if phase == Phase::Streaming && self.coronal_done && with_frame =>
            {
                self.review = Some(auto);
                Phase::TransverseReview
            }
            Step::Command(Command::Recompute) if in_review => {
                self.review = Some(auto);
                phase
            }
            Step::Adjust { major, minor, .. } if in_review => {
                self.review = Some((*major, *minor));
                phase
            }
            Step::Command(Command::AcceptMeasurement) if phase == Phase::CoronalReview => {
                self.length = Some(self.review.take().unwrap().0 * SPACING);
                self.coronal_done = true;
                Phase::Streaming
            }
            Step::Command(Command::AcceptMeasurement) if phase == Phase::TransverseReview => {
                let (w, t) = self.review.take().unwrap();
                self.dims = Some((self.length.unwrap(), w * SPACING, t * SPACING));
                Phase::Complete
            }
            _ => return false,
        };
        self.phase = Some(next);
        true
    }
}

/// Returns the final phase.
pub fn run_sequence(steps: &[(Step, bool)]) -> Result<Phase, String> {
    let frame = pair();
    let mut state = SessionState::new();
    state.start_streaming();
    let mut reference = Reference::default();
    for (i, (step, with_frame)) in steps.iter().enumerate() {
        let cmd = match step {
            Step::Command(c) | Step::Adjust { cmd: c, .. } => c,
        };
        let before = state.clone();
        let got = state.handle(cmd, with_frame.then_some(&frame));
        let expected = reference.apply(step, *with_frame);
        let ctx = || format!("step {i} {cmd} (frame: {with_frame}) from {:?}", before.phase());
        match (&got, expected) {
            (Ok(_), true) => {}
            (Err(e), false) => {
                if state.phase() != before.phase() || state.measurement() != before.measurement() {
                    return Err(format!("{}: rejected command changed state", ctx()));
                }
                let in_review = matches!(before.phase(), Phase::CoronalReview | Phase::TransverseReview);
                let degenerate = matches!(cmd, Command::AdjustBox(c) if c[0] == c[1]);
                if (in_review && degenerate) != (*e == SessionError::InvalidBox) {
                    return Err(format!("{}: unexpected error {e:?}", ctx()));
                }
            }
            _ => return Err(format!("{}: got {got:?}, reference accepts: {expected}", ctx())),
        }
        if state.phase() != reference.phase() {
            return Err(format!("{}: phase {:?}, reference {:?}", ctx(), state.phase(), reference.phase()));
        }
        let (c, t) = state.accept_counts();
        if c > 1 || t > 1 {
            return Err(format!("{}: accept counts {c},{t}", ctx()));
        }
        if state.phase() == Phase::Complete {
            if state.accept_counts() != (1, 1) || state.volume_computations() != 1 {
                return Err(format!("{}: complete with counts {:?}", ctx(), state.accept_counts()));
            }
            let m = state.measurement();
            let (l, w, t) = reference.dims.unwrap();
            let close = |a: Option<f64>, b: f64| a.is_some_and(|a| (a - b).abs() <= 1e-9 * b);
            let v = PI / 6.0 * l * w * t;
            if !(close(m.length_mm, l) && close(m.width_mm, w) && close(m.thickness_mm, t)) {
                return Err(format!("{}: dims {m:?}, reference {l} {w} {t}", ctx()));
            }
            if !close(m.volume_mm3, v) {
                return Err(format!("{}: volume {:?}, reference {v}", ctx(), m.volume_mm3));
            }
        } else if state.volume_computations() != 0 || state.measurement().volume_mm3.is_some() {
            return Err(format!("{}: volume outside complete", ctx()));
        }
    }
    Ok(state.phase())
}


/// Runs `count` random sequences of up to 15 commands. Returns how many
/// ended complete, or the first disagreement with the reference.
pub fn fuzz(count: usize, rng: &mut impl Rng) -> Result<usize, String> {
    let mut completed = 0;
    for _ in 0..count {
        let len = rng.random_range(1..16);
        let steps: Vec<_> = (0..len).map(|_| random_step(rng)).collect();
        match run_sequence(&steps) {
            Ok(phase) => completed += (phase == Phase::Complete) as usize,
            Err(e) => return Err(format!("{e}\nsequence: {steps:?}")),
        }
    }
    Ok(completed)
}
