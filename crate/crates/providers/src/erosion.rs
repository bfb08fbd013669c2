use std::collections::HashSet;

use usar_core::mask::BACKGROUND;
use usar_core::Mask;

/// Binary erosion of the foreground by a Euclidean disk of radius `r`.
///
/// A foreground pixel survives when no background pixel, including the
/// implicit background outside the image, lies within distance `r`.
/// Survivors keep their class label.
pub fn erode(mask: &Mask, r: u32) -> Mask {
    if r == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let is_fg = |x: i64, y: i64| {
        x >= 0 && y >= 0 && x < w && y < h && mask.get(x as usize, y as usize) != BACKGROUND
    };

    // The nearest background point of any foreground pixel always touches
    // the foreground, so those frontier points suffice.
    let mut frontier = HashSet::new();
    for y in 0..h {
        for x in 0..w {
            if !is_fg(x, y) {
                continue;
            }
            for (dx, dy) in NEIGHBORS {
                if !is_fg(x + dx, y + dy) {
                    frontier.insert((x + dx, y + dy));
                }
            }
        }
    }

    let r = r as i64;
    let disk: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    let mut out = mask.clone();
    for &(fx, fy) in &frontier {
        for &(dx, dy) in &disk {
            let (x, y) = (fx + dx, fy + dy);
            if x >= 0 && y >= 0 && x < w && y < h {
                out.set(x as usize, y as usize, BACKGROUND);
            }
        }
    }
    out
}

const NEIGHBORS: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];
