//! Window texture statistics: grey-level co-occurrence moments, run-length
//! statistics, grey-mass geometric moments and the smooth-variation kernel.
//!
//! Every function here looks only at the window it is given. Background cells
//! (value [`BACKGROUND`]) never pair in the co-occurrence matrix, break runs,
//! and carry zero mass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{FatWindow, Raster, BACKGROUND};

/// 0°, 45°, 90° and 135° unit offsets as `(dx, dy)` with y pointing down.
pub const UNIT_OFFSETS: [(i32, i32); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];

/// Maps fat-range HU onto `levels` grey levels; background maps to `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    lo: i32,
    span: i32,
    levels: usize,
}

impl Quantizer {
    pub fn new(window: FatWindow, levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 grey levels, got {levels}"
            )));
        }
        Ok(Self {
            lo: window.lo as i32,
            span: window.span(),
            levels,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    #[inline]
    pub fn level(&self, v: i16) -> Option<usize> {
        if v == BACKGROUND {
            return None;
        }
        let rel = (v as i32 - self.lo).clamp(0, self.span - 1) as i64;
        Some((rel * self.levels as i64 / self.span as i64) as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlcmMoments {
    pub energy: f64,
    pub contrast: f64,
    pub correlation: f64,
    pub homogeneity: f64,
    pub entropy: f64,
}

impl GlcmMoments {
    /// Values of a single-cell matrix, used when a window has too few pairs.
    pub const UNIFORM: GlcmMoments = GlcmMoments {
        energy: 1.0,
        contrast: 0.0,
        correlation: 1.0,
        homogeneity: 1.0,
        entropy: 0.0,
    };
}

/// Symmetric, normalised co-occurrence matrix over `offsets` and its five
/// Haralick moments. Correlation is reported as 1 when the matrix has zero
/// variance.
pub fn glcm_moments(window: &Raster<i16>, quant: &Quantizer, offsets: &[(i32, i32)]) -> Result<GlcmMoments> {
    let n = quant.levels();
    let mut counts = vec![0u32; n * n];
    let mut pairs = 0u64;
    let (w, h) = window.dims();
    let levels: Vec<Option<usize>> = window.data().iter().map(|&v| quant.level(v)).collect();
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            let Some(i) = levels[y as usize * w + x as usize] else {
                continue;
            };
            for &(dx, dy) in offsets {
                let (qx, qy) = (x + dx, y + dy);
                if qx < 0 || qy < 0 || qx >= w as i32 || qy >= h as i32 {
                    continue;
                }
                if let Some(j) = levels[qy as usize * w + qx as usize] {
                    counts[i * n + j] += 1;
                    counts[j * n + i] += 1;
                    pairs += 1;
                }
            }
        }
    }
    if pairs < 2 {
        return Err(Error::DegenerateWindow("fewer than two co-occurring pairs"));
    }
    let total = (2 * pairs) as f64;

    let mut mean = 0.0;
    for i in 0..n {
        for j in 0..n {
            mean += i as f64 * counts[i * n + j] as f64 / total;
        }
    }
    let mut m = GlcmMoments {
        energy: 0.0,
        contrast: 0.0,
        correlation: 0.0,
        homogeneity: 0.0,
        entropy: 0.0,
    };
    let mut var = 0.0;
    let mut cov = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = counts[i * n + j];
            if c == 0 {
                continue;
            }
            let p = c as f64 / total;
            let d = i as f64 - j as f64;
            m.energy += p * p;
            m.contrast += d * d * p;
            m.homogeneity += p / (1.0 + d * d);
            m.entropy -= p * p.log2();
            var += (i as f64 - mean).powi(2) * p;
            cov += (i as f64 - mean) * (j as f64 - mean) * p;
        }
    }
    m.correlation = if var > 1e-12 { cov / var } else { 1.0 };
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunLengthStats {
    pub run_percentage: f64,
    pub grey_level_nonuniformity: f64,
}

/// Horizontal maximal runs of equal grey level.
pub fn run_length_stats(window: &Raster<i16>, quant: &Quantizer) -> Result<RunLengthStats> {
    let mut runs_per_level = vec![0u64; quant.levels()];
    let mut runs = 0u64;
    let mut pixels = 0u64;
    for row in window.data().chunks_exact(window.width()) {
        let mut prev: Option<usize> = None;
        for &v in row {
            let level = quant.level(v);
            if let Some(g) = level {
                pixels += 1;
                if prev != Some(g) {
                    runs += 1;
                    runs_per_level[g] += 1;
                }
            }
            prev = level;
        }
    }
    if pixels == 0 {
        return Err(Error::DegenerateWindow("no foreground pixels"));
    }
    let gln = runs_per_level.iter().map(|&r| (r * r) as f64).sum::<f64>() / runs as f64;
    Ok(RunLengthStats {
        run_percentage: runs as f64 / pixels as f64,
        grey_level_nonuniformity: gln,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricMoments {
    pub mu20: f64,
    pub mu02: f64,
    pub mu11: f64,
}

/// Second-order central moments with `|value|` as mass, normalised by total mass.
pub fn geometric_moments(window: &Raster<i16>) -> Result<GeometricMoments> {
    let w = window.width();
    let mut mass = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (i, &v) in window.data().iter().enumerate() {
        let m = (v as f64).abs();
        mass += m;
        sx += m * (i % w) as f64;
        sy += m * (i / w) as f64;
    }
    if mass == 0.0 {
        return Err(Error::ZeroMass);
    }
    let (cx, cy) = (sx / mass, sy / mass);
    let mut out = GeometricMoments {
        mu20: 0.0,
        mu02: 0.0,
        mu11: 0.0,
    };
    for (i, &v) in window.data().iter().enumerate() {
        let m = (v as f64).abs();
        if m == 0.0 {
            continue;
        }
        let dx = (i % w) as f64 - cx;
        let dy = (i / w) as f64 - cy;
        out.mu20 += m * dx * dx;
        out.mu02 += m * dy * dy;
        out.mu11 += m * dx * dy;
    }
    out.mu20 /= mass;
    out.mu02 /= mass;
    out.mu11 /= mass;
    Ok(out)
}

/// Normalised kernel whose weight at `(dx, dy)` is a 1-D Gaussian of the
/// Chebyshev distance `max(|dx|, |dy|)` from the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvKernel {
    size: usize,
    weights: Vec<f64>,
}

impl CsvKernel {
    pub fn new(size: usize, sigma: f64) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::EvenWindowSize(size));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        let r = (size / 2) as i64;
        let ring: Vec<f64> = (0..=r)
            .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()))
            .collect();
        let mut weights = Vec::with_capacity(size * size);
        for y in -r..=r {
            for x in -r..=r {
                weights.push(ring[x.abs().max(y.abs()) as usize]);
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|v| *v /= total);
        Ok(Self { size, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn apply(&self, window: &Raster<i16>) -> f64 {
        debug_assert_eq!(window.dims(), (self.size, self.size));
        self.weights
            .iter()
            .zip(window.data())
            .map(|(&k, &v)| k * v as f64)
            .sum()
    }
}

/// Coefficient of smooth variation of a square window.
pub fn csv(window: &Raster<i16>, sigma: f64) -> Result<f64> {
    if window.width() != window.height() {
        return Err(Error::DimensionMismatch(format!(
            "smooth-variation window must be square, got {}x{}",
            window.width(),
            window.height()
        )));
    }
    Ok(CsvKernel::new(window.width(), sigma)?.apply(window))
}

/// Arithmetic mean over every cell, background included.
pub fn window_mean(window: &Raster<i16>) -> f64 {
    window.data().iter().map(|&v| v as f64).sum::<f64>() / window.data().len() as f64
}
