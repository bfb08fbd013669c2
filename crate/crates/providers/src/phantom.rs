//! Synthetic kidney phantom: nested ellipses with speckle, probe drift and
//! optional acoustic shadow.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use usar_core::mask::{BACKGROUND, CENTRAL_COMPLEX, CORTEX};
use usar_core::{GrayImage, Mask};

const BACKGROUND_LEVEL: f64 = 30.0;
const CORTEX_LEVEL: f64 = 110.0;
const COMPLEX_LEVEL: f64 = 190.0;
const SHADOW_GAIN: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid phantom: {0}")]
pub struct PhantomError(pub String);

/// Shadow wedge cast from the probe at the top edge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ArtifactMode {
    #[default]
    None,
    /// A narrow wedge that stops at the kidney's center line.
    Mild,
    /// A wide wedge through the full depth; it cuts the kidney in two.
    Severe,
}

impl FromStr for ArtifactMode {
    type Err = PhantomError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ArtifactMode::None),
            "mild" => Ok(ArtifactMode::Mild),
            "severe" => Ok(ArtifactMode::Severe),
            other => Err(PhantomError(format!("unknown artifact mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    /// Cortex semi-axes in pixels, `semi_minor <= semi_major`.
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Central complex semi-axes as a fraction of the cortex ones.
    pub inner_scale: f64,
    /// Orientation of the major axis, radians, y pointing down.
    pub theta: f64,
    /// Peak center displacement in pixels.
    pub drift_amplitude: f64,
    /// Drift period in frames.
    pub drift_period: f64,
    /// Multiplicative speckle strength in `[0, 1]`.
    pub noise: f64,
    pub artifact: ArtifactMode,
    pub pixel_spacing: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            semi_major: 150.0,
            semi_minor: 65.0,
            inner_scale: 0.5,
            theta: 0.35,
            drift_amplitude: 6.0,
            drift_period: 90.0,
            noise: 0.25,
            artifact: ArtifactMode::None,
            pixel_spacing: 0.35,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<(), PhantomError> {
        let fail = |msg: String| Err(PhantomError(msg));
        if self.width == 0 || self.height == 0 || self.width > u16::MAX as usize
            || self.height > u16::MAX as usize
        {
            return fail(format!("image size {}x{}", self.width, self.height));
        }
        if !(self.semi_minor > 0.0 && self.semi_minor <= self.semi_major && self.semi_major.is_finite()) {
            return fail(format!(
                "semi-axes must satisfy 0 < b <= a, got a={} b={}",
                self.semi_major, self.semi_minor
            ));
        }
        if !(self.inner_scale > 0.0 && self.inner_scale < 1.0) {
            return fail(format!("inner scale {} outside (0, 1)", self.inner_scale));
        }
        if !self.theta.is_finite() {
            return fail("theta must be finite".into());
        }
        if !(self.drift_amplitude >= 0.0 && self.drift_amplitude.is_finite()) {
            return fail(format!("drift amplitude {}", self.drift_amplitude));
        }
        if !(self.drift_period > 0.0 && self.drift_period.is_finite()) {
            return fail(format!("drift period {}", self.drift_period));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return fail(format!("noise {} outside [0, 1]", self.noise));
        }
        if !(self.pixel_spacing > 0.0 && self.pixel_spacing.is_finite()) {
            return fail(format!("pixel spacing {}", self.pixel_spacing));
        }
        let reach = self.semi_major + self.drift_amplitude;
        let room = (self.width.min(self.height) / 2) as f64 - 1.0;
        if reach > room {
            return fail(format!(
                "kidney reach {reach} px does not fit a {}x{} image",
                self.width, self.height
            ));
        }
        Ok(())
    }

    /// Kidney center at frame `t`.
    pub fn center(&self, t: u64) -> (f64, f64) {
        let base = ((self.width / 2) as f64, (self.height / 2) as f64);
        if self.drift_amplitude == 0.0 {
            return base;
        }
        let phase = 2.0 * PI * (t as f64 / self.drift_period).fract();
        (
            base.0 + self.drift_amplitude * phase.sin(),
            base.1 + 0.5 * self.drift_amplitude * (2.0 * phase).sin(),
        )
    }

    /// Pixel-footprint extents of the cortex outline, major then minor.
    ///
    /// Exact for axis-aligned phantoms with integer semi-axes and center.
    pub fn analytic_extents(&self) -> (f64, f64) {
        (2.0 * self.semi_major + 1.0, 2.0 * self.semi_minor + 1.0)
    }
}

fn inside(u: f64, v: f64, a: f64, b: f64) -> bool {
    // Multiplied out so integer inputs are evaluated exactly.
    u * u * (b * b) + v * v * (a * a) <= a * a * (b * b)
}

fn in_shadow(spec: &PhantomSpec, cx: f64, cy: f64, x: f64, y: f64) -> bool {
    let (apex_x, half_angle, depth) = match spec.artifact {
        ArtifactMode::None => return false,
        ArtifactMode::Mild => (
            cx + 0.5 * spec.semi_major * spec.theta.cos(),
            1.5f64.to_radians(),
            cy,
        ),
        ArtifactMode::Severe => (cx, 5.0f64.to_radians(), f64::INFINITY),
    };
    y >= 0.0 && y <= depth && (x - apex_x).abs() <= y * half_angle.tan()
}

/// `level.round().clamp(0.0, 255.0)` without the libm call, which
/// dominates rendering time on baseline x86-64.
fn round_level(level: f64) -> u8 {
    let l = level.clamp(0.0, 255.0);
    if l < 0.5 {
        0
    } else {
        // Exact for l >= 0.5: l + 0.5 is representable, truncation floors it.
        (l + 0.5) as u8
    }
}

fn frame_rng(seed: u64, t: u64) -> ChaCha8Rng {
    let mixed = seed ^ t.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Renders frame `t`: the grayscale image and its exact label mask.
///
/// Output depends only on `(spec, t)`; the speckle comes from a portable
/// ChaCha stream and only basic IEEE arithmetic is used on pixel values.
pub fn phantom_next(spec: &PhantomSpec, t: u64) -> Result<(GrayImage, Mask), PhantomError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let (cx, cy) = spec.center(t);
    let (s, c) = spec.theta.sin_cos();
    let (a, b) = (spec.semi_major, spec.semi_minor);
    let (ia, ib) = (a * spec.inner_scale, b * spec.inner_scale);
    let mut rng = (spec.noise > 0.0).then(|| frame_rng(spec.seed, t));

    // Pixels outside this box skip the containment tests.
    let half_x = (a * a * c * c + b * b * s * s).sqrt() + 1.0;
    let half_y = (a * a * s * s + b * b * c * c).sqrt() + 1.0;
    let (x_lo, x_hi) = (cx - half_x, cx + half_x);
    let (y_lo, y_hi) = (cy - half_y, cy + half_y);

    let mut labels = vec![BACKGROUND; w * h];
    let mut pixels = vec![0u8; w * h];
    for y in 0..h {
        let row_near = (y as f64) >= y_lo && (y as f64) <= y_hi;
        for x in 0..w {
            let near = row_near && (x as f64) >= x_lo && (x as f64) <= x_hi;
            let mut label = if !near {
                BACKGROUND
            } else {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let u = c * dx + s * dy;
                let v = c * dy - s * dx;
                if inside(u, v, ia, ib) {
                    CENTRAL_COMPLEX
                } else if inside(u, v, a, b) {
                    CORTEX
                } else {
                    BACKGROUND
                }
            };
            let mut level = match label {
                CENTRAL_COMPLEX => COMPLEX_LEVEL,
                CORTEX => CORTEX_LEVEL,
                _ => BACKGROUND_LEVEL,
            };
            if let Some(rng) = rng.as_mut() {
                let n: f64 = rng.random::<f64>() * 2.0 - 1.0;
                level *= 1.0 + spec.noise * n;
            }
            if in_shadow(spec, cx, cy, x as f64, y as f64) {
                label = BACKGROUND;
                level *= SHADOW_GAIN;
            }
            let i = y * w + x;
            labels[i] = label;
            pixels[i] = round_level(level);
        }
    }
    let image = GrayImage::new(w, h, pixels).expect("buffer sized to image");
    let mask = Mask::new(w, h, labels, spec.pixel_spacing).expect("labels and spacing validated");
    Ok((image, mask))
}

#[cfg(test)]
mod tests {
    #[test]
    fn round_level_matches_round() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let edges = [-3.0, 0.0, 0.25, 0.49999999999999994, 0.5, 1.5 - f64::EPSILON, 2.5, 254.5, 255.4, 300.0];
        let random = (0..100_000).map(|_| rng.random_range(-5.0..260.0));
        for l in edges.into_iter().chain(random).chain((0..=510).map(|k| k as f64 / 2.0)) {
            assert_eq!(super::round_level(l), l.round().clamp(0.0, 255.0) as u8, "{l}");
        }
    }

    use super::*;
    use usar_core::geometry::{largest_component, oriented_bounding_box, select_region};
    use usar_core::ClassSelector;

    fn quiet(a: f64, b: f64, theta: f64) -> PhantomSpec {
        PhantomSpec {
            semi_major: a,
            semi_minor: b,
            theta,
            drift_amplitude: 0.0,
            noise: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn axis_aligned_extents_are_exact() {
        let (_, mask) = phantom_next(&quiet(100.0, 40.0, 0.0), 0).unwrap();
        let region = select_region(&mask, ClassSelector::Union).unwrap();
        let bx = oriented_bounding_box(&region).unwrap();
        assert_eq!(bx.theta, 0.0);
        assert_eq!((bx.extent_major, bx.extent_minor), (201.0, 81.0));
    }

    #[test]
    fn nested_labels() {
        let (image, mask) = phantom_next(&quiet(100.0, 40.0, 0.0), 0).unwrap();
        assert_eq!(mask.get(256, 256), CENTRAL_COMPLEX);
        assert_eq!(mask.get(256 + 80, 256), CORTEX);
        assert_eq!(mask.get(10, 10), BACKGROUND);
        assert_eq!(image.get(256, 256), 190);
        assert_eq!(image.get(256 + 80, 256), 110);
        assert_eq!(image.get(10, 10), 30);
    }

    #[test]
    fn deterministic_per_frame() {
        let spec = PhantomSpec {
            seed: 42,
            artifact: ArtifactMode::Mild,
            ..Default::default()
        };
        let first = phantom_next(&spec, 17).unwrap();
        assert_eq!(first, phantom_next(&spec, 17).unwrap());
        assert_ne!(first.0, phantom_next(&spec, 18).unwrap().0);
        let other_seed = PhantomSpec { seed: 43, ..spec.clone() };
        assert_ne!(first.0, phantom_next(&other_seed, 17).unwrap().0);
    }

    #[test]
    fn severe_shadow_splits_the_kidney() {
        let clean = quiet(150.0, 65.0, 0.35);
        let severe = PhantomSpec {
            artifact: ArtifactMode::Severe,
            ..clean.clone()
        };
        let (_, full) = phantom_next(&clean, 0).unwrap();
        let (_, cut) = phantom_next(&severe, 0).unwrap();
        let whole = select_region(&full, ClassSelector::Union).unwrap();
        let region = select_region(&cut, ClassSelector::Union).unwrap();
        let biggest = largest_component(&region);
        assert!(biggest.len() < region.len(), "mask did not split");
        assert!(biggest.len() < whole.len());
    }

    #[test]
    fn mild_shadow_trims_without_splitting() {
        let mild = PhantomSpec {
            artifact: ArtifactMode::Mild,
            ..quiet(150.0, 65.0, 0.35)
        };
        let (_, clean) = phantom_next(&quiet(150.0, 65.0, 0.35), 0).unwrap();
        let (_, cut) = phantom_next(&mild, 0).unwrap();
        let region = select_region(&cut, ClassSelector::Union).unwrap();
        assert!(region.len() < clean.foreground_count());
        assert_eq!(largest_component(&region).len(), region.len());
    }

    #[test]
    fn drift_moves_the_center() {
        let spec = PhantomSpec::default();
        assert_eq!(spec.center(0), (256.0, 256.0));
        let (x, _) = spec.center(22);
        assert!((x - 256.0 - 6.0 * (2.0 * PI * 22.0 / 90.0).sin()).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_specs() {
        for bad in [
            PhantomSpec { semi_minor: 0.0, ..Default::default() },
            PhantomSpec { semi_minor: 200.0, ..Default::default() },
            PhantomSpec { inner_scale: 1.0, ..Default::default() },
            PhantomSpec { noise: 1.5, ..Default::default() },
            PhantomSpec { semi_major: 255.0, ..Default::default() },
            PhantomSpec { pixel_spacing: 0.0, ..Default::default() },
            PhantomSpec { width: 0, ..Default::default() },
        ] {
            assert!(phantom_next(&bad, 0).is_err(), "{bad:?}");
        }
        assert_eq!("severe".parse::<ArtifactMode>(), Ok(ArtifactMode::Severe));
        assert!("heavy".parse::<ArtifactMode>().is_err());
    }
}
