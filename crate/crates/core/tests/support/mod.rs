//! Brute-force reference implementations and fixtures shared by the
//! integration tests. Each oracle follows the textbook definition directly
//! and shares no code with the library.

#![allow(dead_code, clippy::needless_range_loop)]

use cardiofat::imaging::{BinarySlice, FatWindow, Raster};
use cardiofat::pipeline::phantom::{generate_phantom, PhantomParams};
use cardiofat::registration::{build_atlas, Atlas, Point};
use rand::Rng;

/// WMI from a dense joint histogram, fixed values binned over their own
/// range and atlas weights over [0, 1].
pub fn wmi_oracle(fixed: &[f64], atlas: &[f64], bins: usize, base: f64) -> f64 {
    let lo = fixed.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = fixed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bin_of = |v: f64, lo: f64, hi: f64| -> usize {
        if hi <= lo {
            0
        } else {
            let b = ((v - lo) / (hi - lo) * bins as f64).floor() as usize;
            b.min(bins - 1)
        }
    };
    let mut joint = vec![vec![0.0f64; bins]; bins];
    for (&f, &m) in fixed.iter().zip(atlas) {
        joint[bin_of(f, lo, hi)][bin_of(m, 0.0, 1.0)] += 1.0;
    }
    let n = fixed.len() as f64;
    let pf: Vec<f64> = (0..bins).map(|f| joint[f].iter().sum::<f64>() / n).collect();
    let pm: Vec<f64> = (0..bins).map(|m| (0..bins).map(|f| joint[f][m]).sum::<f64>() / n).collect();
    let mut total = 0.0;
    for f in 0..bins {
        for m in 0..bins {
            let p = joint[f][m] / n;
            if p > 0.0 {
                let w = 1.0 / ((f as f64 - m as f64).abs() + 1.0);
                total += w * p * (p / (pf[f] * pm[m])).log(base);
            }
        }
    }
    total
}

/// Grey level of a fat value, `None` for background.
pub fn level(v: i16, window: FatWindow, levels: usize) -> Option<usize> {
    if v == 0 {
        return None;
    }
    let span = (window.hi as i32 - window.lo as i32 + 1) as f64;
    let clamped = (v as i32).clamp(window.lo as i32, window.hi as i32);
    Some(((clamped - window.lo as i32) as f64 * levels as f64 / span).floor() as usize)
}

pub struct Haralick {
    pub energy: f64,
    pub contrast: f64,
    pub correlation: f64,
    pub homogeneity: f64,
    pub entropy: f64,
}

/// Symmetric GLCM by enumerating every ordered pixel pair and checking
/// whether their displacement equals one of the offsets or its negation.
pub fn glcm_oracle(win: &Raster<i16>, window: FatWindow, levels: usize, offsets: &[(i32, i32)]) -> Option<Haralick> {
    let (w, h) = win.dims();
    let px: Vec<(i32, i32, Option<usize>)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| (x as i32, y as i32, level(win.get(x, y), window, levels)))
        .collect();
    let mut m = vec![vec![0.0f64; levels]; levels];
    let mut total = 0.0;
    for &(ax, ay, la) in &px {
        for &(bx, by, lb) in &px {
            let (Some(i), Some(j)) = (la, lb) else { continue };
            let d = (bx - ax, by - ay);
            let hits = offsets.iter().filter(|&&o| o == d || (-o.0, -o.1) == d).count();
            if hits > 0 {
                m[i][j] += hits as f64;
                total += hits as f64;
            }
        }
    }
    if total < 4.0 {
        return None;
    }
    let p: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|c| c / total).collect()).collect();
    let mu_i: f64 = (0..levels).map(|i| i as f64 * p[i].iter().sum::<f64>()).sum();
    let mu_j: f64 = (0..levels).map(|j| j as f64 * (0..levels).map(|i| p[i][j]).sum::<f64>()).sum();
    let var_i: f64 = (0..levels).map(|i| (i as f64 - mu_i).powi(2) * p[i].iter().sum::<f64>()).sum();
    let var_j: f64 = (0..levels)
        .map(|j| (j as f64 - mu_j).powi(2) * (0..levels).map(|i| p[i][j]).sum::<f64>())
        .sum();
    let mut out = Haralick {
        energy: 0.0,
        contrast: 0.0,
        correlation: 0.0,
        homogeneity: 0.0,
        entropy: 0.0,
    };
    let mut cov = 0.0;
    for i in 0..levels {
        for j in 0..levels {
            let q = p[i][j];
            let d = i as f64 - j as f64;
            out.energy += q * q;
            out.contrast += d * d * q;
            out.homogeneity += q / (1.0 + d * d);
            if q > 0.0 {
                out.entropy -= q * q.log2();
            }
            cov += (i as f64 - mu_i) * (j as f64 - mu_j) * q;
        }
    }
    let sd = (var_i * var_j).sqrt();
    out.correlation = if sd > 1e-12 { cov / sd } else { 1.0 };
    Some(out)
}

/// Run percentage and grey-level non-uniformity from explicitly collected
/// horizontal runs.
pub fn runs_oracle(win: &Raster<i16>, window: FatWindow, levels: usize) -> Option<(f64, f64)> {
    let (w, h) = win.dims();
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut pixels = 0usize;
    for y in 0..h {
        let mut x = 0;
        while x < w {
            match level(win.get(x, y), window, levels) {
                None => x += 1,
                Some(g) => {
                    let mut len = 0;
                    while x < w && level(win.get(x, y), window, levels) == Some(g) {
                        len += 1;
                        x += 1;
                    }
                    runs.push((g, len));
                    pixels += len;
                }
            }
        }
    }
    if pixels == 0 {
        return None;
    }
    let gln: f64 = (0..levels)
        .map(|g| runs.iter().filter(|r| r.0 == g).count() as f64)
        .map(|c| c * c)
        .sum::<f64>()
        / runs.len() as f64;
    Some((runs.len() as f64 / pixels as f64, gln))
}

/// Normalised second-order central moments with |value| as mass.
pub fn moments_oracle(win: &Raster<i16>) -> Option<(f64, f64, f64)> {
    let (w, h) = win.dims();
    let mass = |x: usize, y: usize| (win.get(x, y) as f64).abs();
    let mut m = 0.0;
    let (mut cx, mut cy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            m += mass(x, y);
            cx += x as f64 * mass(x, y);
            cy += y as f64 * mass(x, y);
        }
    }
    if m == 0.0 {
        return None;
    }
    cx /= m;
    cy /= m;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            a += dx * dx * mass(x, y);
            b += dy * dy * mass(x, y);
            c += dx * dy * mass(x, y);
        }
    }
    Some((a / m, b / m, c / m))
}

/// Gaussian-of-Chebyshev-distance weighted mean of a square window.
pub fn csv_oracle(win: &Raster<i16>, sigma: f64) -> f64 {
    let n = win.width() as i64;
    let c = n / 2;
    let (mut num, mut den) = (0.0, 0.0);
    for y in 0..n {
        for x in 0..n {
            let d = (x - c).abs().max((y - c).abs()) as f64;
            let k = (-d * d / (2.0 * sigma * sigma)).exp();
            num += k * win.get(x as usize, y as usize) as f64;
            den += k;
        }
    }
    num / den
}

/// A window as produced by the fat window: background 0 or a value in the window.
pub fn random_fat_window(rng: &mut impl Rng, size: usize, background: f64) -> Raster<i16> {
    let fw = FatWindow::default();
    Raster::from_fn(size, size, |_, _| {
        if rng.random_bool(background) {
            0
        } else {
            rng.random_range(fw.lo..=fw.hi)
        }
    })
}

/// Atlas whose weights are multiples of `1 / sources`.
pub fn random_atlas(rng: &mut impl Rng, w: usize, h: usize, sources: usize) -> Atlas {
    let patches: Vec<BinarySlice> = (0..sources)
        .map(|_| BinarySlice::from_fn(w, h, |_, _| u8::from(rng.random_bool(0.5))))
        .collect();
    build_atlas(&patches).expect("non-empty patch set")
}

/// Landmark atlas from single-slice phantoms of `seed`.
pub fn phantom_atlas(seed: u64, count: u64) -> Atlas {
    let p = PhantomParams {
        slices: 1,
        ..Default::default()
    };
    let patches: Vec<BinarySlice> = (0..count)
        .map(|i| generate_phantom(seed, i, &p).expect("valid phantom").landmark_patch(0, 64, 32))
        .collect();
    build_atlas(&patches).expect("non-empty patch set")
}

/// One-pixel upper half-ellipse with its apex at `apex`, semi-axes `a` across and `b` down.
pub fn arch(w: usize, h: usize, apex: Point, a: f64, b: f64) -> BinarySlice {
    let mut r = BinarySlice::filled(w, h, 0);
    let cy = apex.y as f64 + b;
    let n = 40_000;
    for i in 0..=n {
        let t = std::f64::consts::PI * i as f64 / n as f64;
        let (x, y) = ((apex.x as f64 + a * t.cos()).round(), (cy - b * t.sin()).round());
        if r.contains(x as i64, y as i64) {
            r.set(x as usize, y as usize, 1);
        }
    }
    r
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
