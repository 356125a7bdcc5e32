//! Synthetic thoracic slices with analytic truth masks.
//!
//! Anatomy is laid out relative to a retrosternal landmark: sternum above it,
//! a wedge of mediastinal fat below it opening onto the fat that wraps an
//! elliptic heart. Epicardial fat lies inside a thin pericardial line,
//! mediastinal fat outside it; a few blobs of other fat sit near the spine.
//! The landmark sits at the target centre plus a random offset.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{save_masks, save_scan, write_binary_png, BinarySlice, CtScan, FatWindow, HuSlice, Label, LabelMask, Raster};
use crate::registration::{default_target_center, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomParams {
    pub width: usize,
    pub height: usize,
    pub slices: usize,
    pub spacing_mm: f64,
    pub slice_thickness_mm: f64,
    /// Landmark offsets are drawn uniformly from `[-max, max]` per axis.
    pub max_offset_x: i32,
    pub max_offset_y: i32,
    /// `None` uses the registration default for the slice size.
    pub target_center: Option<Point>,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            slices: 3,
            spacing_mm: 0.7,
            slice_thickness_mm: 2.5,
            max_offset_x: 30,
            max_offset_y: 15,
            target_center: None,
        }
    }
}

impl PhantomParams {
    pub fn target(&self) -> Point {
        self.target_center
            .unwrap_or_else(|| default_target_center(self.width, self.height))
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 400 || self.height < 400 {
            return Err(Error::InvalidParameter(format!(
                "phantom slices must be at least 400x400, got {}x{}",
                self.width, self.height
            )));
        }
        if self.slices == 0 {
            return Err(Error::InvalidParameter("phantom needs at least one slice".into()));
        }
        if !(self.spacing_mm > 0.0 && self.slice_thickness_mm > 0.0) {
            return Err(Error::InvalidParameter("phantom spacing must be positive".into()));
        }
        if self.max_offset_x < 0 || self.max_offset_y < 0 {
            return Err(Error::InvalidParameter("offset bounds must be non-negative".into()));
        }
        let t = self.target();
        let (w, h) = (self.width as i32, self.height as i32);
        let reach_x = self.max_offset_x + 222;
        if t.x - reach_x < 0 || t.x + reach_x >= w || t.y - self.max_offset_y < 80 || t.y + self.max_offset_y + 300 >= h {
            return Err(Error::InvalidParameter(format!(
                "target centre ({}, {}) leaves no room for the phantom body",
                t.x, t.y
            )));
        }
        Ok(())
    }
}

/// Ground truth written next to each generated scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub seed: u64,
    pub index: u64,
    pub landmark: Point,
    pub offset_x: i32,
    pub offset_y: i32,
    pub target_center: Point,
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub scan: CtScan,
    pub truth_masks: Vec<LabelMask>,
    pub truth: PhantomTruth,
}

impl Phantom {
    /// Binary fat patch of `w`×`h` centred on the landmark of slice `z`.
    pub fn landmark_patch(&self, z: usize, w: usize, h: usize) -> BinarySlice {
        let fat = crate::imaging::window_fat(&self.scan.slices()[z], FatWindow::default());
        let l = self.truth.landmark;
        fat.crop(l.x as i64 - (w / 2) as i64, l.y as i64 - (h / 2) as i64, w, h, 0)
    }
}

/// Shape parameters that vary between phantoms.
struct Anatomy {
    landmark: Point,
    heart_rx: f64,
    heart_ry: f64,
    band_phase: f64,
    blobs: Vec<(f64, f64, f64)>,
}

const AIR: f64 = -1000.0;
const LUNG: (f64, f64) = (-850.0, 30.0);
const SOFT: (f64, f64) = (40.0, 8.0);
const BONE: (f64, f64) = (450.0, 40.0);
const MYOCARDIUM: (f64, f64) = (50.0, 8.0);
const PERICARDIUM: (f64, f64) = (25.0, 5.0);

/// Mean and standard deviation of each fat texture, with the blur radius of its noise.
const EPICARDIAL_FAT: (f64, f64, usize) = (-140.0, 12.0, 2);
const MEDIASTINAL_FAT: (f64, f64, usize) = (-80.0, 18.0, 0);
const OTHER_FAT: (f64, f64, usize) = (-110.0, 15.0, 1);
const FAT_CLAMP: (f64, f64) = (-195.0, -35.0);

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tissue {
    Air,
    Soft,
    Lung,
    Bone,
    Myocardium,
    Pericardium,
    Fat(Label),
}

fn in_ellipse(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> bool {
    ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0
}

impl Anatomy {
    fn draw(rng: &mut ChaCha8Rng, landmark: Point) -> Self {
        let (lx, ly) = (landmark.x as f64, landmark.y as f64);
        let mut blobs = Vec::new();
        for side in [-1.0, 1.0] {
            blobs.push((lx + side * rng.random_range(55.0..65.0), ly + rng.random_range(232.0..242.0), rng.random_range(12.0..16.0)));
            blobs.push((lx + side * rng.random_range(140.0..160.0), ly + rng.random_range(225.0..240.0), rng.random_range(9.0..13.0)));
        }
        Self {
            landmark,
            heart_rx: rng.random_range(92.0..108.0),
            heart_ry: rng.random_range(74.0..86.0),
            band_phase: rng.random_range(0.0..std::f64::consts::TAU),
            blobs,
        }
    }

    /// Tissue at pixel `(x, y)` of slice `k`; the heart shrinks slightly with depth.
    fn tissue(&self, x: f64, y: f64, k: usize) -> Tissue {
        let (lx, ly) = (self.landmark.x as f64, self.landmark.y as f64);
        if !in_ellipse(x, y, lx, ly + 106.0, 215.0, 185.0) {
            return Tissue::Air;
        }
        let shrink = 1.0 - 0.03 * k as f64;
        let (rx, ry) = (self.heart_rx * shrink, self.heart_ry * shrink);
        let (cx, cy) = (lx, ly + 12.0 + 1.10 * self.heart_ry);
        let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
        let r = dx.hypot(dy);
        let theta = dy.atan2(dx);
        let outer = 1.08 + 0.02 * (3.0 * theta + self.band_phase).sin();
        if r < 0.80 {
            return Tissue::Myocardium;
        }
        if r < 0.93 {
            return Tissue::Fat(Label::Epicardial);
        }
        if r < 0.96 {
            return Tissue::Pericardium;
        }
        if r < outer {
            return Tissue::Fat(Label::Mediastinal);
        }
        // Sternum, with the retrosternal wedge of fat opening below it.
        if (ly - 14.0..=ly - 6.0).contains(&y) && (x - lx).abs() <= 36.0 {
            return Tissue::Bone;
        }
        if (ly - 5.0..=ly + 16.0).contains(&y) && (x - lx).abs() <= 22.0 + 1.2 * (y - (ly - 5.0)) {
            return Tissue::Fat(Label::Mediastinal);
        }
        if in_ellipse(x, y, lx, ly + 245.0, 22.0, 22.0) {
            return Tissue::Bone;
        }
        if self.blobs.iter().any(|&(bx, by, br)| in_ellipse(x, y, bx, by, br, br * 0.8)) {
            return Tissue::Fat(Label::OtherFat);
        }
        for side in [-1.0, 1.0] {
            if in_ellipse(x, y, lx + side * 165.0, ly + 95.0, 45.0, 100.0) {
                return Tissue::Lung;
            }
        }
        Tissue::Soft
    }
}

/// Zero-mean unit-variance noise, box-blurred `radius` times over itself.
fn noise_field(rng: &mut ChaCha8Rng, w: usize, h: usize, radius: usize) -> Vec<f64> {
    let mut f: Vec<f64> = (0..w * h).map(|_| rng.sample(StandardNormal)).collect();
    if radius == 0 {
        return f;
    }
    for _ in 0..2 {
        f = box_blur(&f, w, h, radius);
    }
    let n = f.len() as f64;
    let mean = f.iter().sum::<f64>() / n;
    let sd = (f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    f.iter().map(|v| (v - mean) / sd).collect()
}

fn box_blur(src: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                let (c, n) = if horizontal { (x, w) } else { (y, h) };
                let lo = c.saturating_sub(r);
                let hi = (c + r).min(n - 1);
                let mut s = 0.0;
                for t in lo..=hi {
                    s += if horizontal { src[y * w + t] } else { src[t * w + x] };
                }
                out[y * w + x] = s / (hi - lo + 1) as f64;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

fn phantom_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Phantom `index` of the corpus generated from `seed`.
pub fn generate_phantom(seed: u64, index: u64, params: &PhantomParams) -> Result<Phantom> {
    params.validate()?;
    let mut rng = phantom_rng(seed, index);
    let target = params.target();
    let offset_x = rng.random_range(-params.max_offset_x..=params.max_offset_x);
    let offset_y = rng.random_range(-params.max_offset_y..=params.max_offset_y);
    let landmark = Point::new(target.x + offset_x, target.y + offset_y);
    let anatomy = Anatomy::draw(&mut rng, landmark);
    let (w, h) = (params.width, params.height);

    let mut slices = Vec::with_capacity(params.slices);
    let mut masks = Vec::with_capacity(params.slices);
    for k in 0..params.slices {
        let epi = noise_field(&mut rng, w, h, EPICARDIAL_FAT.2);
        let med = noise_field(&mut rng, w, h, MEDIASTINAL_FAT.2);
        let oth = noise_field(&mut rng, w, h, OTHER_FAT.2);
        let white = noise_field(&mut rng, w, h, 0);
        let mut hu = Raster::filled(w, h, 0i16);
        let mut mask = LabelMask::filled(w, h, Label::Background);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let normal = |(m, s): (f64, f64)| m + s * white[i];
                let fat = |(m, s, _): (f64, f64, usize), n: &[f64]| (m + s * n[i]).clamp(FAT_CLAMP.0, FAT_CLAMP.1);
                let tissue = anatomy.tissue(x as f64, y as f64, k);
                let v = match tissue {
                    Tissue::Air => AIR,
                    Tissue::Soft => normal(SOFT).clamp(10.0, 80.0),
                    Tissue::Lung => normal(LUNG).clamp(-950.0, -700.0),
                    Tissue::Bone => normal(BONE).clamp(300.0, 700.0),
                    Tissue::Myocardium => normal(MYOCARDIUM).clamp(20.0, 90.0),
                    Tissue::Pericardium => normal(PERICARDIUM).clamp(5.0, 60.0),
                    Tissue::Fat(Label::Epicardial) => fat(EPICARDIAL_FAT, &epi),
                    Tissue::Fat(Label::Mediastinal) => fat(MEDIASTINAL_FAT, &med),
                    Tissue::Fat(_) => fat(OTHER_FAT, &oth),
                };
                hu.set(x, y, v.round() as i16);
                if let Tissue::Fat(l) = tissue {
                    mask.set(x, y, l);
                }
            }
        }
        slices.push(HuSlice::new(hu, params.spacing_mm, params.spacing_mm, k as u32)?);
        masks.push(mask);
    }
    let scan = CtScan::new(format!("phantom{index:03}"), slices, params.slice_thickness_mm)?;
    Ok(Phantom {
        scan,
        truth_masks: masks,
        truth: PhantomTruth {
            seed,
            index,
            landmark,
            offset_x,
            offset_y,
            target_center: target,
        },
    })
}

pub const TRUTH_FILE: &str = "truth.json";

/// Writes `<out>/<patient>/scan` (slices), `<out>/<patient>/truth` (masks),
/// `<out>/<patient>/truth.json`, and one landmark patch per phantom to
/// `<out>/patches/<patient>.png` for atlas building.
pub fn write_phantom_corpus(
    seed: u64,
    count: usize,
    params: &PhantomParams,
    patch_size: (usize, usize),
    out: &Path,
) -> Result<Vec<PhantomTruth>> {
    if count == 0 {
        return Err(Error::InvalidParameter("phantom count must be at least 1".into()));
    }
    let patches = out.join("patches");
    fs::create_dir_all(&patches).map_err(|e| Error::io(&patches, e))?;
    let mut truths = Vec::with_capacity(count);
    for index in 0..count as u64 {
        let p = generate_phantom(seed, index, params)?;
        let dir = out.join(&p.scan.patient_id);
        save_scan(&p.scan, &dir.join("scan"))?;
        save_masks(&dir.join("truth"), &p.scan, &p.truth_masks)?;
        let truth_path = dir.join(TRUTH_FILE);
        let mut text = serde_json::to_string_pretty(&p.truth).expect("truth serializes");
        text.push('\n');
        fs::write(&truth_path, text).map_err(|e| Error::io(&truth_path, e))?;
        let patch = p.landmark_patch(0, patch_size.0, patch_size.1);
        write_binary_png(&patches.join(format!("{}.png", p.scan.patient_id)), &patch)?;
        truths.push(p.truth);
    }
    Ok(truths)
}

pub fn read_truth(path: &Path) -> Result<PhantomTruth> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
