//! Exhaustive atlas placement over a search region.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::atlas::Atlas;
use super::wmi::{atlas_bins, quantize_in_range, WmiParams, WmiScratch};
use crate::error::{Error, Result};
use crate::imaging::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        dx.hypot(dy)
    }
}

/// Axis-aligned rectangle the atlas must lie inside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRegion {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl SearchRegion {
    pub fn whole(width: usize, height: usize) -> Self {
        Self {
            x: 0,
            y: 0,
            width,
            height,
        }
    }

    /// Anterior half of a supine slice.
    pub fn upper_half(width: usize, height: usize) -> Self {
        Self {
            x: 0,
            y: 0,
            width,
            height: height / 2,
        }
    }

    fn clipped(&self, width: usize, height: usize) -> SearchRegion {
        let x = self.x.min(width);
        let y = self.y.min(height);
        SearchRegion {
            x,
            y,
            width: self.width.min(width - x),
            height: self.height.min(height - y),
        }
    }
}

/// A scored atlas placement. `center` is the atlas centre `(left + w/2, top + h/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkCandidate {
    pub center: Point,
    pub score: f64,
    pub confirmed: bool,
    pub p_l_start: Point,
    pub p_r_start: Point,
    pub p_l_end: Point,
    pub p_r_end: Point,
    pub d_l: f64,
    pub d_r: f64,
}

impl LandmarkCandidate {
    pub fn new(center: Point, score: f64) -> Self {
        Self {
            center,
            score,
            confirmed: false,
            p_l_start: center,
            p_r_start: center,
            p_l_end: center,
            p_r_end: center,
            d_l: 0.0,
            d_r: 0.0,
        }
    }
}

/// Total order used for ranking: score descending, then y, then x ascending.
pub fn rank_order(a: &LandmarkCandidate, b: &LandmarkCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.center.y.cmp(&b.center.y))
        .then(a.center.x.cmp(&b.center.x))
}

/// Precomputed atlas bins shared by all placements.
pub(crate) struct Scorer<'a> {
    fixed: &'a Raster<f64>,
    atlas_bins: Vec<u16>,
    aw: usize,
    ah: usize,
    params: WmiParams,
}

impl<'a> Scorer<'a> {
    pub(crate) fn new(fixed: &'a Raster<f64>, atlas: &Atlas, params: &WmiParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            fixed,
            atlas_bins: atlas_bins(atlas, params.bins),
            aw: atlas.width(),
            ah: atlas.height(),
            params: *params,
        })
    }

    pub(crate) fn center_of(&self, left: usize, top: usize) -> Point {
        Point::new((left + self.aw / 2) as i32, (top + self.ah / 2) as i32)
    }

    /// Top-left corner for an atlas centred on `c`, if it fits inside the raster.
    pub(crate) fn corner_for(&self, c: Point) -> Option<(usize, usize)> {
        let left = c.x as i64 - (self.aw / 2) as i64;
        let top = c.y as i64 - (self.ah / 2) as i64;
        if left < 0
            || top < 0
            || left as usize + self.aw > self.fixed.width()
            || top as usize + self.ah > self.fixed.height()
        {
            None
        } else {
            Some((left as usize, top as usize))
        }
    }

    pub(crate) fn score(&self, left: usize, top: usize, scratch: &mut WmiScratch) -> f64 {
        let fw = self.fixed.width();
        let data = self.fixed.data();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in 0..self.ah {
            let start = (top + row) * fw + left;
            for &v in &data[start..start + self.aw] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let bins = self.params.bins;
        for row in 0..self.ah {
            let start = (top + row) * fw + left;
            let arow = &self.atlas_bins[row * self.aw..(row + 1) * self.aw];
            for (&v, &m) in data[start..start + self.aw].iter().zip(arow) {
                scratch.add(quantize_in_range(v, lo, hi, bins), m);
            }
        }
        scratch.finish(self.params.log_base)
    }
}

/// Score every atlas placement inside `region` at `stride` pixels and rank them.
///
/// Placements are enumerated from the region's top-left corner. The ranking
/// is a total order, so parallel and serial evaluation agree exactly.
pub fn locate_retrosternal(
    fixed: &Raster<f64>,
    atlas: &Atlas,
    params: &WmiParams,
    region: SearchRegion,
    stride: usize,
) -> Result<Vec<LandmarkCandidate>> {
    if stride == 0 {
        return Err(Error::InvalidParameter("search stride must be positive".into()));
    }
    let region = region.clipped(fixed.width(), fixed.height());
    if region.width < atlas.width() || region.height < atlas.height() {
        return Err(Error::SearchRegionTooSmall {
            region_w: region.width,
            region_h: region.height,
            atlas_w: atlas.width(),
            atlas_h: atlas.height(),
        });
    }
    let scorer = Scorer::new(fixed, atlas, params)?;
    let tops: Vec<usize> = (region.y..=region.y + region.height - atlas.height())
        .step_by(stride)
        .collect();
    let lefts: Vec<usize> = (region.x..=region.x + region.width - atlas.width())
        .step_by(stride)
        .collect();

    let mut candidates: Vec<LandmarkCandidate> = tops
        .par_iter()
        .flat_map_iter(|&top| {
            let mut scratch = WmiScratch::new(params.bins);
            lefts
                .iter()
                .map(|&left| {
                    let score = scorer.score(left, top, &mut scratch);
                    LandmarkCandidate::new(scorer.center_of(left, top), score)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    candidates.par_sort_by(rank_order);
    Ok(candidates)
}

/// Best stride-1 placement within `radius` pixels (Chebyshev) of `around`.
pub fn refine_candidate(
    fixed: &Raster<f64>,
    atlas: &Atlas,
    params: &WmiParams,
    around: &LandmarkCandidate,
    radius: i32,
) -> Result<LandmarkCandidate> {
    let scorer = Scorer::new(fixed, atlas, params)?;
    let mut scratch = WmiScratch::new(params.bins);
    let mut best = *around;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let c = Point::new(around.center.x + dx, around.center.y + dy);
            if let Some((left, top)) = scorer.corner_for(c) {
                let cand = LandmarkCandidate::new(c, scorer.score(left, top, &mut scratch));
                if rank_order(&cand, &best) == Ordering::Less {
                    best = cand;
                }
            }
        }
    }
    Ok(best)
}
