//! Geometric confirmation of a retrosternal candidate.
//!
//! Two walkers start inside a small rectangle centred on the candidate and
//! descend through fat pixels, one towards the lower left and one towards the
//! lower right, until neither can move. A genuine retrosternal point sits on
//! top of the fat that wraps the heart, so both walkers travel far, roughly
//! equally, and end a heart-width apart.

use serde::{Deserialize, Serialize};

use super::search::{LandmarkCandidate, Point};
use crate::imaging::BinarySlice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChordMetric {
    /// Straight-line distance between the two end points.
    Euclidean,
    /// Horizontal extent only.
    Horizontal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfirmParams {
    /// Seed rectangle, centred on the candidate.
    pub rect_width: usize,
    pub rect_height: usize,
    /// Longest single move; moves of 2..=gap_max jump over non-fat pixels.
    pub gap_max: usize,
    /// Chord between the end points must lie strictly inside `(min, max) * w`.
    pub min_chord_fraction: f64,
    pub max_chord_fraction: f64,
    /// Each end point must be at least this fraction of `w` away from its seed.
    pub min_travel_fraction: f64,
    pub chord_metric: ChordMetric,
}

impl Default for ConfirmParams {
    fn default() -> Self {
        Self {
            rect_width: 11,
            rect_height: 5,
            gap_max: 2,
            min_chord_fraction: 0.2,
            max_chord_fraction: 0.55,
            min_travel_fraction: 0.2,
            chord_metric: ChordMetric::Euclidean,
        }
    }
}

#[inline]
fn is_fat(fat: &BinarySlice, p: Point) -> bool {
    fat.get_signed(p.x as i64, p.y as i64).is_some_and(|v| v != 0)
}

/// Walk from `start` with horizontal direction `sx` (-1 left, +1 right).
///
/// Shorter moves are always tried before longer jumps; within one length
/// the diagonal wins over the lateral move, which wins over the downward move.
/// Every move advances strictly in x or y, so the walk terminates.
pub fn walk(fat: &BinarySlice, start: Point, sx: i32, gap_max: usize) -> (Point, f64) {
    let dirs = [(sx, 1), (sx, 0), (0, 1)];
    let mut pos = start;
    let mut travelled = 0.0;
    'walk: loop {
        for step in 1..=gap_max.max(1) as i32 {
            for (dx, dy) in dirs {
                let next = Point::new(pos.x + dx * step, pos.y + dy * step);
                if is_fat(fat, next) {
                    travelled += step as f64 * ((dx * dx + dy * dy) as f64).sqrt();
                    pos = next;
                    continue 'walk;
                }
            }
        }
        return (pos, travelled);
    }
}

/// Bottom-most fat pixels of the seed rectangle: (leftmost, rightmost) of that row.
fn seeds(fat: &BinarySlice, center: Point, params: &ConfirmParams) -> Option<(Point, Point)> {
    let x0 = center.x - (params.rect_width / 2) as i32;
    let y0 = center.y - (params.rect_height / 2) as i32;
    for y in (y0..y0 + params.rect_height as i32).rev() {
        let xs = x0..x0 + params.rect_width as i32;
        let left = xs.clone().find(|&x| is_fat(fat, Point::new(x, y)));
        let right = xs.rev().find(|&x| is_fat(fat, Point::new(x, y)));
        if let (Some(l), Some(r)) = (left, right) {
            return Some((Point::new(l, y), Point::new(r, y)));
        }
    }
    None
}

/// Run both walkers and evaluate the three predicates against image width `w`.
/// Fills the walk fields of `candidate` and returns the verdict.
pub fn confirm_candidate(fat: &BinarySlice, candidate: &mut LandmarkCandidate, w: usize, params: &ConfirmParams) -> bool {
    let Some((l0, r0)) = seeds(fat, candidate.center, params) else {
        *candidate = LandmarkCandidate {
            confirmed: false,
            ..LandmarkCandidate::new(candidate.center, candidate.score)
        };
        return false;
    };
    let (l1, d_l) = walk(fat, l0, -1, params.gap_max);
    let (r1, d_r) = walk(fat, r0, 1, params.gap_max);

    let w = w as f64;
    let chord = match params.chord_metric {
        ChordMetric::Euclidean => l1.distance(r1),
        ChordMetric::Horizontal => (r1.x - l1.x).abs() as f64,
    };
    let width_ok = chord > params.min_chord_fraction * w && chord < params.max_chord_fraction * w;
    let balance_ok = d_l >= d_r / 2.0 && d_r >= d_l / 2.0;
    let min_travel = params.min_travel_fraction * w;
    let travel_ok = l0.distance(l1) >= min_travel && r0.distance(r1) >= min_travel;

    candidate.p_l_start = l0;
    candidate.p_r_start = r0;
    candidate.p_l_end = l1;
    candidate.p_r_end = r1;
    candidate.d_l = d_l;
    candidate.d_r = d_r;
    candidate.confirmed = width_ok && balance_ok && travel_ok;
    candidate.confirmed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Raster;

    /// Upper half of an ellipse with apex at `apex`, semi-axes `a` (horizontal) and `b`.
    fn arch(w: usize, h: usize, apex: Point, a: f64, b: f64) -> BinarySlice {
        let mut r = BinarySlice::filled(w, h, 0);
        let cy = apex.y as f64 + b;
        let n = 20_000;
        for i in 0..=n {
            let t = std::f64::consts::PI * i as f64 / n as f64;
            let x = apex.x as f64 + a * t.cos();
            let y = cy - b * t.sin();
            let (xi, yi) = (x.round() as i64, y.round() as i64);
            if r.contains(xi, yi) {
                r.set(xi as usize, yi as usize, 1);
            }
        }
        r
    }

    fn verdict(fat: &BinarySlice, c: Point) -> (bool, LandmarkCandidate) {
        let mut cand = LandmarkCandidate::new(c, 1.0);
        let ok = confirm_candidate(fat, &mut cand, fat.width(), &ConfirmParams::default());
        (ok, cand)
    }

    #[test]
    fn blank_slice_fails() {
        let fat = BinarySlice::filled(64, 64, 0);
        let (ok, c) = verdict(&fat, Point::new(30, 30));
        assert!(!ok);
        assert_eq!(c.d_l, 0.0);
    }

    #[test]
    fn symmetric_arch_of_forty_percent_width_passes() {
        let apex = Point::new(256, 100);
        let fat = arch(512, 512, apex, 0.2 * 512.0, 0.3 * 512.0);
        let (ok, c) = verdict(&fat, apex);
        assert!(ok, "{c:?}");
        let chord = c.p_l_end.distance(c.p_r_end);
        assert!((chord - 0.4 * 512.0).abs() <= 2.0, "{chord}");
        assert!((c.d_l - c.d_r).abs() < 3.0);
    }

    #[test]
    fn too_wide_arch_fails() {
        let apex = Point::new(256, 100);
        let fat = arch(512, 512, apex, 0.3 * 512.0, 0.3 * 512.0);
        // chord 0.6 w = 307 px > 0.55 * 512 = 281.6 px
        assert!(!verdict(&fat, apex).0);
    }

    #[test]
    fn lopsided_walk_fails_balance() {
        let apex = Point::new(256, 60);
        let mut fat = arch(512, 512, apex, 0.2 * 512.0, 0.3 * 512.0);
        // Cut the right leg short.
        for y in 75..512 {
            for x in 257..512 {
                fat.set(x, y, 0);
            }
        }
        let (ok, c) = verdict(&fat, apex);
        assert!(!ok);
        assert!(c.d_r < c.d_l / 2.0);
    }

    #[test]
    fn single_pixel_gaps_are_jumped() {
        // Bar with two vertical legs, 200 px apart.
        let mut fat = BinarySlice::from_fn(512, 512, |x, y| {
            u8::from((y == 100 && (156..=356).contains(&x)) || ((x == 156 || x == 356) && (100..=300).contains(&y)))
        });
        let apex = Point::new(256, 100);
        for y in [150usize, 200, 250] {
            for x in 0..512 {
                fat.set(x, y, 0);
            }
        }
        let (ok, c) = verdict(&fat, apex);
        assert!(ok, "{c:?}");
        assert_eq!(c.p_l_end, Point::new(156, 300));
        assert_eq!(c.p_r_end, Point::new(356, 300));
        // A three-pixel gap stops both walkers short of 0.2 w of travel.
        for x in 0..512 {
            for y in 120..123 {
                fat.set(x, y, 0);
            }
        }
        let (ok, c) = verdict(&fat, apex);
        assert!(!ok);
        assert_eq!(c.p_l_end, Point::new(156, 119));
    }

    #[test]
    fn walker_is_deterministic_and_monotone() {
        let fat = Raster::from_fn(40, 40, |x, y| u8::from((x * 7 + y * 3) % 5 != 0));
        let a = walk(&fat, Point::new(20, 0), -1, 2);
        let b = walk(&fat, Point::new(20, 0), -1, 2);
        assert_eq!(a, b);
        assert!(a.0.x <= 20 && a.0.y >= 0);
    }
}
