//! Weighted mutual information between a fixed window and the atlas.
//!
//! Both rasters are quantised to `bins` levels: the fixed window over its own
//! value range, the atlas over `[0, 1]`. Each joint-histogram cell `(f, m)`
//! contributes `p(f,m) * log_g(p(f,m) / (p(f) p(m)))` scaled by
//! `1 / (|f - m| + 1)`, so agreement between matching intensity levels counts
//! more than co-occurrence of distant levels.

use serde::{Deserialize, Serialize};

use super::atlas::Atlas;
use crate::error::{Error, Result};
use crate::imaging::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WmiParams {
    pub bins: usize,
    pub log_base: f64,
}

impl Default for WmiParams {
    fn default() -> Self {
        Self {
            bins: 32,
            log_base: 2.0,
        }
    }
}

impl WmiParams {
    pub fn new(bins: usize, log_base: f64) -> Result<Self> {
        let p = Self { bins, log_base };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 || self.bins > u16::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "WMI needs between 2 and 65535 bins, got {}",
                self.bins
            )));
        }
        if !(self.log_base > 0.0 && self.log_base.is_finite() && self.log_base != 1.0) {
            return Err(Error::InvalidParameter(format!(
                "invalid logarithm base {}",
                self.log_base
            )));
        }
        Ok(())
    }
}

/// Bin of an atlas weight in `[0, 1]`.
#[inline]
pub fn quantize_unit(w: f64, bins: usize) -> u16 {
    ((w * bins as f64).floor().max(0.0) as usize).min(bins - 1) as u16
}

/// Bin of `v` within `[min, max]`; everything maps to bin 0 when the range is empty.
#[inline]
pub fn quantize_in_range(v: f64, min: f64, max: f64, bins: usize) -> u16 {
    if max <= min {
        return 0;
    }
    (((v - min) / (max - min) * bins as f64).floor() as usize).min(bins - 1) as u16
}

pub(crate) fn atlas_bins(atlas: &Atlas, bins: usize) -> Vec<u16> {
    atlas.weights().data().iter().map(|&w| quantize_unit(w, bins)).collect()
}

/// Reusable joint-histogram buffers for repeated scoring.
pub(crate) struct WmiScratch {
    bins: usize,
    joint: Vec<u32>,
    fixed_marginal: Vec<u32>,
    moving_marginal: Vec<u32>,
    touched: Vec<u32>,
}

impl WmiScratch {
    pub(crate) fn new(bins: usize) -> Self {
        Self {
            bins,
            joint: vec![0; bins * bins],
            fixed_marginal: vec![0; bins],
            moving_marginal: vec![0; bins],
            touched: Vec::new(),
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, f: u16, m: u16) {
        let cell = f as usize * self.bins + m as usize;
        if self.joint[cell] == 0 {
            self.touched.push(cell as u32);
        }
        self.joint[cell] += 1;
        self.fixed_marginal[f as usize] += 1;
        self.moving_marginal[m as usize] += 1;
    }

    /// Evaluate and reset the accumulated histogram.
    pub(crate) fn finish(&mut self, log_base: f64) -> f64 {
        let n: u64 = self.touched.iter().map(|&c| self.joint[c as usize] as u64).sum();
        if n == 0 {
            return 0.0;
        }
        let n_f = n as f64;
        let ln_base = log_base.ln();
        // Sum in cell-index order so the result does not depend on insertion order.
        self.touched.sort_unstable();
        let mut total = 0.0;
        for &cell in &self.touched {
            let cell = cell as usize;
            let (f, m) = (cell / self.bins, cell % self.bins);
            let c = self.joint[cell] as f64;
            let cf = self.fixed_marginal[f] as f64;
            let cm = self.moving_marginal[m] as f64;
            let weight = 1.0 / ((f as f64 - m as f64).abs() + 1.0);
            total += weight * (c / n_f) * ((c * n_f) / (cf * cm)).ln() / ln_base;
            self.joint[cell] = 0;
        }
        self.touched.clear();
        self.fixed_marginal.iter_mut().for_each(|v| *v = 0);
        self.moving_marginal.iter_mut().for_each(|v| *v = 0);
        total
    }
}

/// WMI of two already-quantised rasters of equal length.
pub fn wmi_from_bins(fixed: &[u16], moving: &[u16], params: &WmiParams) -> Result<f64> {
    params.validate()?;
    if fixed.len() != moving.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} fixed bins vs {} moving bins",
            fixed.len(),
            moving.len()
        )));
    }
    if let Some(&b) = fixed.iter().chain(moving).find(|&&b| b as usize >= params.bins) {
        return Err(Error::InvalidParameter(format!(
            "bin index {b} out of range for {} bins",
            params.bins
        )));
    }
    let mut scratch = WmiScratch::new(params.bins);
    for (&f, &m) in fixed.iter().zip(moving) {
        scratch.add(f, m);
    }
    Ok(scratch.finish(params.log_base))
}

/// WMI between a fixed raster window and the atlas (same dimensions).
pub fn wmi(fixed: &Raster<f64>, atlas: &Atlas, params: &WmiParams) -> Result<f64> {
    params.validate()?;
    if !fixed.same_dims(atlas.weights()) {
        return Err(Error::DimensionMismatch(format!(
            "fixed window {}x{} vs atlas {}x{}",
            fixed.width(),
            fixed.height(),
            atlas.width(),
            atlas.height()
        )));
    }
    let (min, max) = min_max(fixed.data());
    let fixed_bins: Vec<u16> = fixed
        .data()
        .iter()
        .map(|&v| quantize_in_range(v, min, max, params.bins))
        .collect();
    wmi_from_bins(&fixed_bins, &atlas_bins(atlas, params.bins), params)
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}
