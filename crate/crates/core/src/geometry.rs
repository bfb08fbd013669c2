//! Automatic kidney measurement from a segmentation mask.
//!
//! The measurement region is reduced to a point set, its second moments give
//! a principal orientation, and the points are boxed in that rotated frame.
//! Coronal views yield length, transverse views yield width and thickness,
//! and the three combine into an ellipsoid volume estimate.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{Mask, BACKGROUND, CENTRAL_COMPLEX, CORTEX};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("no pixel matches the selected region")]
    EmptyRegion,
    #[error("dimension must be positive and finite, got {0}")]
    NonPositiveDimension(f64),
    #[error("box corners are degenerate")]
    DegenerateBox,
}

/// Integer pixel coordinate; `x` grows rightwards, `y` downwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pixel {
    pub x: i32,
    pub y: i32,
}

impl Pixel {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSelector {
    Cortex,
    CentralComplex,
    /// Any non-background label; approximates the capsule outline.
    #[default]
    Union,
}

impl ClassSelector {
    fn matches(self, label: u8) -> bool {
        match self {
            ClassSelector::Cortex => label == CORTEX,
            ClassSelector::CentralComplex => label == CENTRAL_COMPLEX,
            ClassSelector::Union => label != BACKGROUND,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Coronal,
    Transverse,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Coronal => "coronal",
            View::Transverse => "transverse",
        }
    }
}

impl std::str::FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coronal" => Ok(View::Coronal),
            "transverse" => Ok(View::Transverse),
            other => Err(format!("unknown view {other:?}")),
        }
    }
}

/// Un-normalized second moments of a point set about its centroid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scatter2 {
    pub sxx: f64,
    pub syy: f64,
    pub sxy: f64,
    pub centroid_x: f64,
    pub centroid_y: f64,
}

/// Exact integer moment sums. Everything derived from them depends only on
/// coordinate differences, so translating a point set by whole pixels leaves
/// the scatter sums and rotated offsets bit-identical.
struct Moments {
    n: i128,
    sum_x: i128,
    sum_y: i128,
    sum_xx: i128,
    sum_yy: i128,
    sum_xy: i128,
}

impl Moments {
    fn of(points: &[Pixel]) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyRegion);
        }
        let mut m = Moments {
            n: points.len() as i128,
            sum_x: 0,
            sum_y: 0,
            sum_xx: 0,
            sum_yy: 0,
            sum_xy: 0,
        };
        for p in points {
            let (x, y) = (p.x as i128, p.y as i128);
            m.sum_x += x;
            m.sum_y += y;
            m.sum_xx += x * x;
            m.sum_yy += y * y;
            m.sum_xy += x * y;
        }
        Ok(m)
    }

    fn centroid(&self) -> (f64, f64) {
        let n = self.n as f64;
        (self.sum_x as f64 / n, self.sum_y as f64 / n)
    }

    /// Offset of a point from the centroid, computed as `(n*x - sum_x) / n`.
    fn deviation(&self, p: Pixel) -> (f64, f64) {
        let n = self.n as f64;
        (
            (self.n * p.x as i128 - self.sum_x) as f64 / n,
            (self.n * p.y as i128 - self.sum_y) as f64 / n,
        )
    }

    fn scatter(&self) -> Scatter2 {
        let n = self.n as f64;
        let sxx = (self.n * self.sum_xx - self.sum_x * self.sum_x) as f64 / n;
        let syy = (self.n * self.sum_yy - self.sum_y * self.sum_y) as f64 / n;
        let mut sxy = (self.n * self.sum_xy - self.sum_x * self.sum_y) as f64 / n;
        // Rounding of the three divisions can break Cauchy-Schwarz by an ulp
        // for collinear sets.
        let bound = (sxx * syy).sqrt();
        if sxy.abs() > bound {
            sxy = bound.copysign(sxy);
        }
        let (centroid_x, centroid_y) = self.centroid();
        Scatter2 {
            sxx,
            syy,
            sxy,
            centroid_x,
            centroid_y,
        }
    }
}

/// Coordinates of every pixel whose label matches `selector`, row-major.
pub fn select_region(mask: &Mask, selector: ClassSelector) -> Result<Vec<Pixel>, GeometryError> {
    let w = mask.width();
    let points: Vec<Pixel> = mask
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| selector.matches(l))
        .map(|(i, _)| Pixel::new((i % w) as i32, (i / w) as i32))
        .collect();
    if points.is_empty() {
        return Err(GeometryError::EmptyRegion);
    }
    Ok(points)
}

/// The largest 8-connected component of `points`, in row-major order.
///
/// Ties go to the component whose first pixel in row-major order comes
/// first. An empty input yields an empty output.
pub fn largest_component(points: &[Pixel]) -> Vec<Pixel> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut sorted = points.to_vec();
    sorted.sort_unstable_by_key(|p| (p.y, p.x));
    sorted.dedup();

    let index = PointIndex::new(&sorted);
    let mut component = vec![usize::MAX; sorted.len()];
    let mut best = (0usize, 0usize); // (label, size)
    let mut stack = Vec::new();
    let mut next_label = 0usize;

    for start in 0..sorted.len() {
        if component[start] != usize::MAX {
            continue;
        }
        let label = next_label;
        next_label += 1;
        component[start] = label;
        stack.push(start);
        let mut size = 0usize;
        while let Some(i) = stack.pop() {
            size += 1;
            let p = sorted[i];
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    if let Some(j) = index.find(p.x as i64 + dx, p.y as i64 + dy) {
                        if component[j] == usize::MAX {
                            component[j] = label;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        if size > best.1 {
            best = (label, size);
        }
    }

    sorted
        .iter()
        .zip(&component)
        .filter(|(_, &c)| c == best.0)
        .map(|(p, _)| *p)
        .collect()
}

/// Point lookup: a dense grid over the bounding box when it is compact,
/// a hash map otherwise.
enum PointIndex {
    Grid {
        min_x: i64,
        min_y: i64,
        width: i64,
        height: i64,
        cells: Vec<u32>,
    },
    Sparse(HashMap<(i32, i32), usize>),
}

impl PointIndex {
    const EMPTY: u32 = u32::MAX;

    fn new(points: &[Pixel]) -> Self {
        let min_x = points.iter().map(|p| p.x as i64).min().unwrap_or(0);
        let max_x = points.iter().map(|p| p.x as i64).max().unwrap_or(0);
        let min_y = points.iter().map(|p| p.y as i64).min().unwrap_or(0);
        let max_y = points.iter().map(|p| p.y as i64).max().unwrap_or(0);
        let width = max_x - min_x + 1;
        let height = max_y - min_y + 1;
        let area = width.saturating_mul(height);
        if area <= (points.len() as i64).saturating_mul(16).max(1 << 16)
            && points.len() < Self::EMPTY as usize
        {
            let mut cells = vec![Self::EMPTY; area as usize];
            for (i, p) in points.iter().enumerate() {
                cells[((p.y as i64 - min_y) * width + (p.x as i64 - min_x)) as usize] = i as u32;
            }
            PointIndex::Grid {
                min_x,
                min_y,
                width,
                height,
                cells,
            }
        } else {
            PointIndex::Sparse(
                points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| ((p.x, p.y), i))
                    .collect(),
            )
        }
    }

    fn find(&self, x: i64, y: i64) -> Option<usize> {
        match self {
            PointIndex::Grid {
                min_x,
                min_y,
                width,
                height,
                cells,
            } => {
                let gx = x - min_x;
                let gy = y - min_y;
                if gx < 0 || gy < 0 || gx >= *width || gy >= *height {
                    return None;
                }
                match cells[(gy * width + gx) as usize] {
                    Self::EMPTY => None,
                    i => Some(i as usize),
                }
            }
            PointIndex::Sparse(map) => {
                let key = (i32::try_from(x).ok()?, i32::try_from(y).ok()?);
                map.get(&key).copied()
            }
        }
    }
}

pub fn centroid(points: &[Pixel]) -> Result<(f64, f64), GeometryError> {
    Ok(Moments::of(points)?.centroid())
}

pub fn scatter(points: &[Pixel]) -> Result<Scatter2, GeometryError> {
    Ok(Moments::of(points)?.scatter())
}

/// Direction of the principal axis, in `(-pi/2, pi/2]`.
///
/// Uses the two-argument arctangent of the doubled angle, so equal diagonal
/// terms and quadrant signs need no special casing. An isotropic scatter
/// (including a single point) maps to 0.
pub fn principal_orientation(s: &Scatter2) -> f64 {
    if s.sxy == 0.0 && s.sxx == s.syy {
        return 0.0;
    }
    normalize_half_turn(0.5 * (2.0 * s.sxy).atan2(s.sxx - s.syy))
}

/// Wraps an axis direction into `(-pi/2, pi/2]`.
pub fn normalize_half_turn(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(PI);
    if t > FRAC_PI_2 {
        t -= PI;
    }
    if t <= -FRAC_PI_2 {
        t += PI;
    }
    t
}

/// A rectangle aligned to a principal axis.
///
/// `theta` is the direction of the major extent. Extents are in pixels and
/// include the footprint of the boundary pixels, so the corners sit half a
/// pixel outside the outermost pixel centers. Corners are ordered
/// `(-major, -minor)`, `(+major, -minor)`, `(+major, +minor)`, `(-major, +minor)`
/// in the box frame, so edge 0-1 runs along the major axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center_x: f64,
    pub center_y: f64,
    pub theta: f64,
    pub extent_major: f64,
    pub extent_minor: f64,
    pub corners: [(f64, f64); 4],
}

impl OrientedBox {
    pub fn from_parts(
        center_x: f64,
        center_y: f64,
        theta: f64,
        extent_major: f64,
        extent_minor: f64,
    ) -> Self {
        let (sin, cos) = theta.sin_cos();
        let (hu, hv) = (extent_major / 2.0, extent_minor / 2.0);
        let corner = |su: f64, sv: f64| {
            let (u, v) = (su * hu, sv * hv);
            (center_x + cos * u - sin * v, center_y + sin * u + cos * v)
        };
        Self {
            center_x,
            center_y,
            theta,
            extent_major,
            extent_minor,
            corners: [
                corner(-1.0, -1.0),
                corner(1.0, -1.0),
                corner(1.0, 1.0),
                corner(-1.0, 1.0),
            ],
        }
    }

    /// Re-derives center, orientation and extents from four corners given in
    /// perimeter order. Opposite edges are averaged, so a slightly skewed
    /// quadrilateral is fitted by its mean parallelogram.
    pub fn from_corners(corners: [(f64, f64); 4]) -> Result<Self, GeometryError> {
        if corners.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(GeometryError::DegenerateBox);
        }
        let [c0, c1, c2, c3] = corners;
        let center_x = (c0.0 + c1.0 + c2.0 + c3.0) / 4.0;
        let center_y = (c0.1 + c1.1 + c2.1 + c3.1) / 4.0;
        let edge_a = (
            ((c1.0 - c0.0) + (c2.0 - c3.0)) / 2.0,
            ((c1.1 - c0.1) + (c2.1 - c3.1)) / 2.0,
        );
        let edge_b = (
            ((c3.0 - c0.0) + (c2.0 - c1.0)) / 2.0,
            ((c3.1 - c0.1) + (c2.1 - c1.1)) / 2.0,
        );
        let len_a = edge_a.0.hypot(edge_a.1);
        let len_b = edge_b.0.hypot(edge_b.1);
        let (major, minor, dir) = if len_a >= len_b {
            (len_a, len_b, edge_a)
        } else {
            (len_b, len_a, edge_b)
        };
        if !(minor > 0.0) {
            return Err(GeometryError::DegenerateBox);
        }
        let theta = normalize_half_turn(dir.1.atan2(dir.0));
        Ok(Self::from_parts(center_x, center_y, theta, major, minor))
    }

    /// Offset of `(x, y)` from the box center in the box frame.
    pub fn to_box_frame(&self, x: f64, y: f64) -> (f64, f64) {
        let (sin, cos) = self.theta.sin_cos();
        let (dx, dy) = (x - self.center_x, y - self.center_y);
        (cos * dx + sin * dy, -sin * dx + cos * dy)
    }
}

/// PCA-aligned bounding box of a point set.
pub fn oriented_bounding_box(points: &[Pixel]) -> Result<OrientedBox, GeometryError> {
    let moments = Moments::of(points)?;
    let s = moments.scatter();
    let theta = principal_orientation(&s);
    let (sin, cos) = theta.sin_cos();

    let (mut min_u, mut max_u) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_v, mut max_v) = (f64::INFINITY, f64::NEG_INFINITY);
    for &p in points {
        let (dx, dy) = moments.deviation(p);
        let u = cos * dx + sin * dy;
        let v = -sin * dx + cos * dy;
        min_u = min_u.min(u);
        max_u = max_u.max(u);
        min_v = min_v.min(v);
        max_v = max_v.max(v);
    }
    let extent_u = max_u - min_u + 1.0;
    let extent_v = max_v - min_v + 1.0;
    let mid_u = (min_u + max_u) / 2.0;
    let mid_v = (min_v + max_v) / 2.0;
    let center_x = s.centroid_x + cos * mid_u - sin * mid_v;
    let center_y = s.centroid_y + sin * mid_u + cos * mid_v;

    Ok(if extent_u >= extent_v {
        OrientedBox::from_parts(center_x, center_y, theta, extent_u, extent_v)
    } else {
        OrientedBox::from_parts(
            center_x,
            center_y,
            normalize_half_turn(theta + FRAC_PI_2),
            extent_v,
            extent_u,
        )
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementSource {
    #[default]
    Automatic,
    Refined,
}

/// Kidney dimensions in millimeters, filled in phase by phase.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct KidneyMeasurement {
    pub length_mm: Option<f64>,
    pub width_mm: Option<f64>,
    pub thickness_mm: Option<f64>,
    pub volume_mm3: Option<f64>,
    pub source: MeasurementSource,
}

impl KidneyMeasurement {
    /// Combines two partial measurements; values in `other` win. The result
    /// is refined if either side was.
    pub fn merge(&self, other: &KidneyMeasurement) -> KidneyMeasurement {
        let source = if self.source == MeasurementSource::Refined
            || other.source == MeasurementSource::Refined
        {
            MeasurementSource::Refined
        } else {
            MeasurementSource::Automatic
        };
        KidneyMeasurement {
            length_mm: other.length_mm.or(self.length_mm),
            width_mm: other.width_mm.or(self.width_mm),
            thickness_mm: other.thickness_mm.or(self.thickness_mm),
            volume_mm3: other.volume_mm3.or(self.volume_mm3),
            source,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.length_mm.is_some() && self.width_mm.is_some() && self.thickness_mm.is_some()
    }

    /// Fills `volume_mm3` from L, W and T when all three are present.
    pub fn with_volume(mut self) -> Result<KidneyMeasurement, GeometryError> {
        if let (Some(l), Some(w), Some(t)) = (self.length_mm, self.width_mm, self.thickness_mm) {
            self.volume_mm3 = Some(ellipsoid_volume(l, w, t)?);
        }
        Ok(self)
    }
}

/// Converts box extents to millimeters for the given view.
///
/// Coronal gives length from the major extent. Transverse gives width from
/// the major extent and thickness from the minor one.
pub fn extract_dimensions(bx: &OrientedBox, view: View, pixel_spacing: f64) -> KidneyMeasurement {
    match view {
        View::Coronal => KidneyMeasurement {
            length_mm: Some(bx.extent_major * pixel_spacing),
            ..Default::default()
        },
        View::Transverse => KidneyMeasurement {
            width_mm: Some(bx.extent_major * pixel_spacing),
            thickness_mm: Some(bx.extent_minor * pixel_spacing),
            ..Default::default()
        },
    }
}

/// `V = pi/6 * L * W * T`.
///
/// The product is taken in sorted order so the result does not depend on
/// argument order, not even in the last bit.
pub fn ellipsoid_volume(length: f64, width: f64, thickness: f64) -> Result<f64, GeometryError> {
    let mut dims = [length, width, thickness];
    for d in dims {
        if !(d > 0.0 && d.is_finite()) {
            return Err(GeometryError::NonPositiveDimension(d));
        }
    }
    dims.sort_by(f64::total_cmp);
    Ok(PI / 6.0 * (dims[0] * dims[1] * dims[2]))
}

/// Full automatic measurement of one mask: region selection, largest
/// component, oriented box and dimensions.
pub fn measure_mask(
    mask: &Mask,
    selector: ClassSelector,
    view: View,
) -> Result<(OrientedBox, KidneyMeasurement), GeometryError> {
    let region = largest_component(&select_region(mask, selector)?);
    let bx = oriented_bounding_box(&region)?;
    Ok((bx, extract_dimensions(&bx, view, mask.pixel_spacing())))
}
