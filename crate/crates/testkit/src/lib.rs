//! Brute-force reference implementations for tests.
//!
//! Nothing here calls into the production crates. Points are plain
//! `(x, y)` integer pairs and masks are plain label slices, so the oracles
//! stay independent of the code they check.

use std::collections::{HashSet, VecDeque};

/// Pixels whose centers fall inside the ellipse with semi-axes `a` (along
/// `theta`) and `b`, centered at `(cx, cy)`.
pub fn rasterize_ellipse(cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> Vec<(i32, i32)> {
    let (s, c) = theta.sin_cos();
    let r = a.max(b).ceil() as i32 + 1;
    let (x0, y0) = (cx.round() as i32, cy.round() as i32);
    let mut out = Vec::new();
    for y in y0 - r..=y0 + r {
        for x in x0 - r..=x0 + r {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let u = (dx * c + dy * s) / a;
            let v = (-dx * s + dy * c) / b;
            if u * u + v * v <= 1.0 {
                out.push((x, y));
            }
        }
    }
    out
}

/// Pixels with at least one 4-neighbour outside the set. Extremes of any
/// linear projection of the set are attained on these.
pub fn boundary(points: &[(i32, i32)]) -> Vec<(i32, i32)> {
    let set: HashSet<(i32, i32)> = points.iter().copied().collect();
    points
        .iter()
        .copied()
        .filter(|&(x, y)| {
            [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|(dx, dy)| !set.contains(&(x + dx, y + dy)))
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct OracleRect {
    /// Direction of the longer side, degrees in `[0, 180)`.
    pub theta_deg: f64,
    pub extent_major: f64,
    pub extent_minor: f64,
}

/// Minimum-area rotated rectangle over a `step_deg` grid of orientations.
/// Extents count whole pixel footprints (`max - min + 1`).
pub fn min_area_rect(points: &[(i32, i32)], step_deg: f64) -> OracleRect {
    let pts = boundary(points);
    let steps = (180.0 / step_deg).round() as usize;
    let mut best: Option<(f64, OracleRect)> = None;
    for k in 0..steps {
        let deg = k as f64 * step_deg;
        let (s, c) = deg.to_radians().sin_cos();
        let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) =
            (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in &pts {
            let (x, y) = (x as f64, y as f64);
            let u = c * x + s * y;
            let v = -s * x + c * y;
            lo_u = lo_u.min(u);
            hi_u = hi_u.max(u);
            lo_v = lo_v.min(v);
            hi_v = hi_v.max(v);
        }
        let eu = hi_u - lo_u + 1.0;
        let ev = hi_v - lo_v + 1.0;
        let area = eu * ev;
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            let rect = if eu >= ev {
                OracleRect {
                    theta_deg: deg,
                    extent_major: eu,
                    extent_minor: ev,
                }
            } else {
                OracleRect {
                    theta_deg: (deg + 90.0) % 180.0,
                    extent_major: ev,
                    extent_minor: eu,
                }
            };
            best = Some((area, rect));
        }
    }
    best.expect("non-empty point set").1
}

/// Smallest angular distance between two axis directions, modulo 180 degrees.
pub fn axis_angle_diff_deg(a_deg: f64, b_deg: f64) -> f64 {
    let d = (a_deg - b_deg).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// 8-connected components by breadth-first flood fill, each sorted
/// row-major, in order of their first row-major pixel.
pub fn components(points: &[(i32, i32)]) -> Vec<Vec<(i32, i32)>> {
    let mut remaining: HashSet<(i32, i32)> = points.iter().copied().collect();
    let mut order: Vec<(i32, i32)> = remaining.iter().copied().collect();
    order.sort_by_key(|&(x, y)| (y, x));
    let mut out = Vec::new();
    for seed in order {
        if !remaining.remove(&seed) {
            continue;
        }
        let mut comp = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some((x, y)) = queue.pop_front() {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let n = (x + dx, y + dy);
                    if remaining.remove(&n) {
                        comp.push(n);
                        queue.push_back(n);
                    }
                }
            }
        }
        comp.sort_by_key(|&(x, y)| (y, x));
        out.push(comp);
    }
    out
}

/// Per-pixel counting of (tp, fp, fn) for one label.
pub fn count_overlap(pred: &[u8], gt: &[u8], label: u8) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for i in 0..pred.len() {
        let p = pred[i] == label;
        let g = gt[i] == label;
        if p && g {
            tp += 1;
        } else if p {
            fp += 1;
        } else if g {
            fneg += 1;
        }
    }
    (tp, fp, fneg)
}

/// DICE and IoU from raw counts, 1.0 for an empty class.
pub fn overlap_scores(tp: u64, fp: u64, fneg: u64) -> (f64, f64) {
    if tp + fp + fneg == 0 {
        return (1.0, 1.0);
    }
    let (tp, fp, fneg) = (tp as f64, fp as f64, fneg as f64);
    (2.0 * tp / (2.0 * tp + fp + fneg), tp / (tp + fp + fneg))
}
