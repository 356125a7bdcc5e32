//! Retrosternal-atlas registration.
//!
//! A scan is brought into the common frame by (1) scoring every atlas
//! placement on one fat-windowed slice with weighted mutual information,
//! (2) walking the ranked placements best-first until one passes the
//! geometric confirmation, and (3) translating every slice so that the
//! confirmed landmark lands on a fixed target point.

mod atlas;
mod confirm;
mod search;
mod wmi;

pub use atlas::{build_atlas, load_atlas, save_atlas, Atlas};
pub use confirm::{confirm_candidate, walk, ChordMetric, ConfirmParams};
pub use search::{locate_retrosternal, rank_order, refine_candidate, LandmarkCandidate, Point, SearchRegion};
pub use wmi::{quantize_in_range, quantize_unit, wmi, wmi_from_bins, WmiParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{window_fat, CtScan, FatWindow, LabelMask, Label, Raster, BACKGROUND};

/// Integer translation that moved a scan's landmark onto `target_center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegistrationTransform {
    pub dx: i32,
    pub dy: i32,
    /// Isotropic pixel spacing the scan was rescaled to before matching.
    pub scale_applied_mm: f64,
    pub landmark: Point,
    pub target_center: Point,
}

impl RegistrationTransform {
    pub fn apply_point(&self, p: Point) -> Point {
        Point::new(p.x + self.dx, p.y + self.dy)
    }

    pub fn invert_point(&self, p: Point) -> Point {
        Point::new(p.x - self.dx, p.y - self.dy)
    }

    pub fn apply_raster<T: Copy>(&self, r: &Raster<T>, fill: T) -> Raster<T> {
        r.translate(self.dx as i64, self.dy as i64, fill)
    }

    pub fn apply_mask(&self, m: &LabelMask) -> LabelMask {
        self.apply_raster(m, Label::Background)
    }

    /// Translation in the opposite direction, back to the source frame.
    pub fn inverse(&self) -> RegistrationTransform {
        RegistrationTransform {
            dx: -self.dx,
            dy: -self.dy,
            scale_applied_mm: self.scale_applied_mm,
            landmark: self.target_center,
            target_center: self.landmark,
        }
    }
}

/// Default common point: horizontally centred, 30% down from the top.
pub fn default_target_center(width: usize, height: usize) -> Point {
    Point::new((width / 2) as i32, (height as f64 * 0.3).round() as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationParams {
    pub wmi: WmiParams,
    pub confirm: ConfirmParams,
    pub fat_window: FatWindow,
    pub search_stride: usize,
    /// Stride-1 refinement radius around a confirmed coarse candidate.
    pub refine_radius: i32,
    /// `None` searches the upper half of the slice.
    pub search_region: Option<SearchRegion>,
    /// `None` uses [`default_target_center`].
    pub target_center: Option<Point>,
    /// Which slice of the scan is matched against the atlas.
    pub recognition_slice: usize,
    /// Give up after this many ranked candidates (`None` = try all).
    pub max_candidates: Option<usize>,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            wmi: WmiParams::default(),
            confirm: ConfirmParams::default(),
            fat_window: FatWindow::default(),
            search_stride: 2,
            refine_radius: 1,
            search_region: None,
            target_center: None,
            recognition_slice: 0,
            max_candidates: None,
        }
    }
}

/// Find the confirmed retrosternal landmark on the recognition slice.
pub fn recognise(scan: &CtScan, atlas: &Atlas, params: &RegistrationParams) -> Result<LandmarkCandidate> {
    let slice = scan.slices().get(params.recognition_slice).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "recognition slice {} out of range for {} slices",
            params.recognition_slice,
            scan.len()
        ))
    })?;
    let fat = window_fat(slice, params.fat_window);
    let fixed = fat.map(f64::from);
    let (w, h) = fat.dims();
    let region = params.search_region.unwrap_or(SearchRegion::upper_half(w, h));
    let ranked = locate_retrosternal(&fixed, atlas, &params.wmi, region, params.search_stride)?;
    let limit = params.max_candidates.unwrap_or(ranked.len());

    for coarse in ranked.iter().take(limit) {
        let mut coarse = *coarse;
        if !confirm_candidate(&fat, &mut coarse, w, &params.confirm) {
            continue;
        }
        let mut refined = refine_candidate(&fixed, atlas, &params.wmi, &coarse, params.refine_radius)?;
        if refined.center != coarse.center
            && confirm_candidate(&fat, &mut refined, w, &params.confirm)
        {
            return Ok(refined);
        }
        return Ok(coarse);
    }
    Err(Error::RecognitionFailed)
}

/// Recognise the landmark and translate every slice so it lands on the target.
/// Pixels revealed at the borders are filled with background (0 HU).
pub fn register_scan(scan: &CtScan, atlas: &Atlas, params: &RegistrationParams) -> Result<(CtScan, RegistrationTransform)> {
    let found = recognise(scan, atlas, params)?;
    let (w, h) = scan.dims();
    let target = params.target_center.unwrap_or(default_target_center(w, h));
    let transform = RegistrationTransform {
        dx: target.x - found.center.x,
        dy: target.y - found.center.y,
        scale_applied_mm: scan.spacing().0,
        landmark: found.center,
        target_center: target,
    };
    let mut out = scan.map_slices(|s| s.with_raster(transform.apply_raster(s.raster(), BACKGROUND)))?;
    out.registration = Some(transform);
    Ok((out, transform))
}
