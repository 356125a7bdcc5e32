//! Per-pixel feature vectors over registered, fat-windowed slices.
//!
//! Each fat pixel becomes one row: its grey level, position, position
//! relative to the slice centre of gravity, and texture statistics of the
//! square vicinity centred on it.

mod dataset;
mod texture;

pub use dataset::{read_arff, write_arff, Dataset, Provenance, Row, FEATURE_CLASSES};
pub use texture::{
    csv, geometric_moments, glcm_moments, run_length_stats, window_mean, CsvKernel, GeometricMoments, GlcmMoments,
    Quantizer, RunLengthStats, UNIT_OFFSETS,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{apply_fat_window, CtScan, FatRaster, FatWindow, Label, LabelMask, Raster, BACKGROUND};

/// Attribute names in row order.
pub const ATTRIBUTE_NAMES: [&str; 18] = [
    "grey",
    "x",
    "y",
    "z",
    "x_rel",
    "y_rel",
    "win_mean",
    "glcm_energy",
    "glcm_contrast",
    "glcm_correlation",
    "glcm_homogeneity",
    "glcm_entropy",
    "mom_mu20",
    "mom_mu02",
    "mom_mu11",
    "run_percentage",
    "grey_level_nonuniformity",
    "csv",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GravityMode {
    /// Pixels weighted by `|HU|`.
    #[default]
    Grey,
    /// Every fat pixel weighs 1.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub window_size: usize,
    pub levels: usize,
    pub fat_window: FatWindow,
    /// `None` uses half the window radius.
    pub csv_sigma: Option<f64>,
    /// Only pixels with `x % stride == 0 && y % stride == 0` are sampled.
    pub sample_stride: usize,
    pub gravity: GravityMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_size: 25,
            levels: 16,
            fat_window: FatWindow::default(),
            csv_sigma: None,
            sample_stride: 1,
            gravity: GravityMode::Grey,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size.is_multiple_of(2) {
            return Err(Error::EvenWindowSize(self.window_size));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidParameter("sample stride must be positive".into()));
        }
        if self.fat_window.contains(BACKGROUND) {
            return Err(Error::InvalidParameter(format!(
                "fat window {}..{} contains the background value {BACKGROUND}",
                self.fat_window.lo, self.fat_window.hi
            )));
        }
        Quantizer::new(self.fat_window, self.levels)?;
        self.sigma().map(|_| ())
    }

    pub fn sigma(&self) -> Result<f64> {
        let s = self.csv_sigma.unwrap_or((self.window_size / 2) as f64 / 2.0);
        if s > 0.0 && s.is_finite() {
            Ok(s)
        } else {
            Err(Error::InvalidParameter(format!("CSV sigma must be positive, got {s}")))
        }
    }

    #[inline]
    pub fn samples(&self, x: usize, y: usize) -> bool {
        x.is_multiple_of(self.sample_stride) && y.is_multiple_of(self.sample_stride)
    }
}

/// One row of [`ATTRIBUTE_NAMES`] values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub grey: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub x_rel: f64,
    pub y_rel: f64,
    pub win_mean: f64,
    pub glcm: GlcmMoments,
    pub moments: GeometricMoments,
    pub runs: RunLengthStats,
    pub csv: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; 18] {
        [
            self.grey,
            self.x,
            self.y,
            self.z,
            self.x_rel,
            self.y_rel,
            self.win_mean,
            self.glcm.energy,
            self.glcm.contrast,
            self.glcm.correlation,
            self.glcm.homogeneity,
            self.glcm.entropy,
            self.moments.mu20,
            self.moments.mu02,
            self.moments.mu11,
            self.runs.run_percentage,
            self.runs.grey_level_nonuniformity,
            self.csv,
        ]
    }
}

/// `size`×`size` window centred on `(x, y)`; cells outside the slice are background.
pub fn extract_window(slice: &Raster<i16>, x: usize, y: usize, size: usize) -> Result<Raster<i16>> {
    if size.is_multiple_of(2) {
        return Err(Error::EvenWindowSize(size));
    }
    let r = (size / 2) as i64;
    Ok(slice.crop(x as i64 - r, y as i64 - r, size, size, BACKGROUND))
}

/// Centroid of the non-background pixels of a fat-windowed raster.
pub fn center_of_gravity(fat: &FatRaster, mode: GravityMode) -> Result<(f64, f64)> {
    let w = fat.width();
    let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (i, &v) in fat.data().iter().enumerate() {
        if v == BACKGROUND {
            continue;
        }
        let weight = match mode {
            GravityMode::Grey => (v as f64).abs(),
            GravityMode::Binary => 1.0,
        };
        m += weight;
        sx += weight * (i % w) as f64;
        sy += weight * (i / w) as f64;
    }
    if m == 0.0 {
        return Err(Error::EmptySlice);
    }
    Ok((sx / m, sy / m))
}

/// `(x, y, features, tag)` for one sampled pixel.
pub type PixelRow<T> = (usize, usize, [f64; 18], T);

/// Precomputed per-configuration state for repeated pixel extraction.
#[derive(Debug, Clone)]
pub struct Extractor {
    config: FeatureConfig,
    quant: Quantizer,
    kernel: CsvKernel,
}

impl Extractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            quant: Quantizer::new(config.fat_window, config.levels)?,
            kernel: CsvKernel::new(config.window_size, config.sigma()?)?,
            config,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    /// Features of the fat pixel at `(x, y)` on slice `z`. `cog` is the slice's centre of gravity.
    pub fn pixel(&self, fat: &FatRaster, x: usize, y: usize, z: u32, cog: (f64, f64)) -> FeatureVector {
        let win = extract_window(fat, x, y, self.config.window_size).expect("odd size validated");
        let glcm = match glcm_moments(&win, &self.quant, &UNIT_OFFSETS) {
            Ok(m) => m,
            Err(_) => GlcmMoments::UNIFORM,
        };
        let moments = geometric_moments(&win).unwrap_or(GeometricMoments {
            mu20: 0.0,
            mu02: 0.0,
            mu11: 0.0,
        });
        let runs = run_length_stats(&win, &self.quant).unwrap_or(RunLengthStats {
            run_percentage: 1.0,
            grey_level_nonuniformity: 0.0,
        });
        FeatureVector {
            grey: fat.get(x, y) as f64,
            x: x as f64,
            y: y as f64,
            z: z as f64,
            x_rel: x as f64 - cog.0,
            y_rel: y as f64 - cog.1,
            win_mean: window_mean(&win),
            glcm,
            moments,
            runs,
            csv: self.kernel.apply(&win),
        }
    }

    /// Rows for every sampled fat pixel of one slice accepted by `keep`, in (y, x) order.
    pub fn slice_rows<T: Send>(
        &self,
        fat: &FatRaster,
        z: u32,
        keep: impl Fn(usize, usize) -> Option<T> + Sync,
    ) -> Result<Vec<PixelRow<T>>> {
        let cog = match center_of_gravity(fat, self.config.gravity) {
            Ok(c) => c,
            Err(Error::EmptySlice) => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let w = fat.width();
        Ok((0..fat.height())
            .into_par_iter()
            .flat_map_iter(|y| {
                let keep = &keep;
                (0..w).filter_map(move |x| {
                    if fat.get(x, y) == BACKGROUND || !self.config.samples(x, y) {
                        return None;
                    }
                    let tag = keep(x, y)?;
                    Some((x, y, self.pixel(fat, x, y, z, cog).to_array(), tag))
                })
            })
            .collect())
    }
}

/// Class index of a fat label within [`FEATURE_CLASSES`].
pub fn class_index(label: Label) -> Option<usize> {
    match label {
        Label::Background => None,
        l => Some(l.index() as usize - 1),
    }
}

pub fn class_label(index: usize) -> Result<Label> {
    Label::from_index(index as u8 + 1)
        .filter(|l| *l != Label::Background)
        .ok_or(Error::UnknownClass(index))
}

/// One row per sampled, labelled fat pixel, in (scan, z, y, x) order.
pub fn build_dataset(scans: &[CtScan], masks: &[Vec<LabelMask>], config: &FeatureConfig) -> Result<Dataset> {
    let extractor = Extractor::new(*config)?;
    if scans.len() != masks.len() {
        return Err(Error::AlignmentMismatch(format!(
            "{} scans but {} mask stacks",
            scans.len(),
            masks.len()
        )));
    }
    let mut ds = Dataset::new("fat", &ATTRIBUTE_NAMES, &FEATURE_CLASSES);
    ds.provenance.feature_config = Some(*config);
    for (scan, stack) in scans.iter().zip(masks) {
        if stack.len() != scan.len() {
            return Err(Error::AlignmentMismatch(format!(
                "scan {} has {} slices but {} masks",
                scan.patient_id,
                scan.len(),
                stack.len()
            )));
        }
        ds.provenance.patients.push(scan.patient_id.clone());
        if let Some(t) = scan.registration {
            match ds.provenance.target_center {
                None => ds.provenance.target_center = Some(t.target_center),
                Some(c) if c != t.target_center => {
                    return Err(Error::RegistrationMismatch {
                        expected: Some((c.x, c.y)),
                        found: Some((t.target_center.x, t.target_center.y)),
                    })
                }
                Some(_) => {}
            }
        }
        for (slice, mask) in scan.slices().iter().zip(stack) {
            if !mask.same_dims(slice.raster()) {
                return Err(Error::AlignmentMismatch(format!(
                    "mask {}x{} vs slice {}x{} (scan {}, z {})",
                    mask.width(),
                    mask.height(),
                    slice.width(),
                    slice.height(),
                    scan.patient_id,
                    slice.z_index()
                )));
            }
            let fat = apply_fat_window(slice, config.fat_window);
            if let Some(i) = mask
                .data()
                .iter()
                .zip(fat.data())
                .position(|(&l, &v)| l != Label::Background && v == BACKGROUND)
            {
                return Err(Error::AlignmentMismatch(format!(
                    "scan {} z {}: label {} at ({}, {}) lies outside the fat window",
                    scan.patient_id,
                    slice.z_index(),
                    mask.data()[i].name(),
                    i % mask.width(),
                    i / mask.width()
                )));
            }
            let rows = extractor.slice_rows(&fat, slice.z_index(), |x, y| class_index(mask.get(x, y)))?;
            ds.rows.extend(rows.into_iter().map(|(_, _, values, class)| Row {
                values: values.to_vec(),
                class,
            }));
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::HuSlice;

    #[test]
    fn cog_examples() {
        let mut r = FatRaster::filled(30, 30, 0);
        r.set(10, 20, -100);
        assert_eq!(center_of_gravity(&r, GravityMode::Grey).unwrap(), (10.0, 20.0));
        let mut r = FatRaster::filled(11, 3, 0);
        r.set(0, 0, -80);
        r.set(10, 0, -80);
        assert_eq!(center_of_gravity(&r, GravityMode::Grey).unwrap(), (5.0, 0.0));
        assert!(matches!(
            center_of_gravity(&FatRaster::filled(3, 3, 0), GravityMode::Binary),
            Err(Error::EmptySlice)
        ));
    }

    #[test]
    fn cog_modes_differ_on_unequal_masses() {
        let mut r = FatRaster::filled(5, 1, 0);
        r.set(0, 0, -200);
        r.set(4, 0, -50);
        assert_eq!(center_of_gravity(&r, GravityMode::Binary).unwrap().0, 2.0);
        assert!((center_of_gravity(&r, GravityMode::Grey).unwrap().0 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn window_centre_border_and_interior() {
        let r = Raster::from_fn(40, 30, |x, y| -(((x * 3 + y * 5) % 170) as i16) - 30);
        let w = extract_window(&r, 17, 12, 25).unwrap();
        assert_eq!(w.get(12, 12), r.get(17, 12));
        let c = extract_window(&r, 0, 0, 25).unwrap();
        for y in 0..25 {
            for x in 0..25 {
                let expect = if x >= 12 && y >= 12 { r.get(x - 12, y - 12) } else { 0 };
                assert_eq!(c.get(x, y), expect);
            }
        }
        let i = extract_window(&r, 20, 15, 5).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                assert_eq!(i.get(x, y), r.get(18 + x, 13 + y));
            }
        }
        assert!(matches!(extract_window(&r, 1, 1, 24), Err(Error::EvenWindowSize(24))));
    }

    fn one_slice_scan(values: Raster<i16>) -> CtScan {
        CtScan::new("p", vec![HuSlice::new(values, 0.7, 0.7, 0).unwrap()], 1.0).unwrap()
    }

    #[test]
    fn three_labelled_pixels_give_three_rows() {
        let mut hu = Raster::filled(20, 20, 40i16);
        let mut mask = LabelMask::filled(20, 20, Label::Background);
        for (i, (x, l)) in [(3, Label::Epicardial), (9, Label::Mediastinal), (15, Label::OtherFat)]
            .into_iter()
            .enumerate()
        {
            hu.set(x, 5 + i, -100 - i as i16);
            mask.set(x, 5 + i, l);
        }
        // A fat pixel without a label is not a training row.
        hu.set(1, 1, -90);
        let ds = build_dataset(&[one_slice_scan(hu)], &[vec![mask]], &FeatureConfig::default()).unwrap();
        assert_eq!(ds.rows.len(), 3);
        assert_eq!(ds.rows.iter().map(|r| r.class).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(ds.rows[1].values[0], -101.0);
        assert_eq!(ds.rows[1].values[1], 9.0);
        assert!(ds.rows.iter().all(|r| r.values.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn empty_slice_and_misaligned_labels() {
        let hu = Raster::filled(10, 10, 40i16);
        let mask = LabelMask::filled(10, 10, Label::Background);
        let ds = build_dataset(&[one_slice_scan(hu.clone())], &[vec![mask.clone()]], &FeatureConfig::default()).unwrap();
        assert!(ds.rows.is_empty());
        let mut bad = mask.clone();
        bad.set(2, 2, Label::Epicardial);
        assert!(matches!(
            build_dataset(&[one_slice_scan(hu.clone())], &[vec![bad]], &FeatureConfig::default()),
            Err(Error::AlignmentMismatch(_))
        ));
        assert!(matches!(
            build_dataset(&[one_slice_scan(hu)], &[vec![LabelMask::filled(9, 10, Label::Background)]], &FeatureConfig::default()),
            Err(Error::AlignmentMismatch(_))
        ));
    }

    #[test]
    fn stride_samples_grid_points_only() {
        let hu = Raster::filled(12, 12, -100i16);
        let mask = LabelMask::filled(12, 12, Label::Epicardial);
        let cfg = FeatureConfig {
            sample_stride: 4,
            ..Default::default()
        };
        let ds = build_dataset(&[one_slice_scan(hu)], &[vec![mask]], &cfg).unwrap();
        assert_eq!(ds.rows.len(), 9);
        let xy: Vec<(f64, f64)> = ds.rows.iter().map(|r| (r.values[1], r.values[2])).collect();
        assert_eq!(xy[0], (0.0, 0.0));
        assert_eq!(xy[4], (4.0, 4.0));
    }

    #[test]
    fn translation_moves_position_but_not_texture() {
        let base = Raster::from_fn(60, 60, |x, y| {
            if (15..45).contains(&x) && (15..45).contains(&y) {
                -(((x * 7 + y * 11) % 170) as i16) - 30
            } else {
                0
            }
        });
        let shifted = base.translate(4, -3, 0);
        let ex = Extractor::new(FeatureConfig::default()).unwrap();
        let a = ex.pixel(&base, 30, 30, 0, (0.0, 0.0)).to_array();
        let b = ex.pixel(&shifted, 34, 27, 0, (0.0, 0.0)).to_array();
        assert_eq!(&a[6..], &b[6..]);
        assert_eq!((b[1] - a[1], b[2] - a[2]), (4.0, -3.0));
    }

    #[test]
    fn config_validation() {
        assert!(FeatureConfig::default().validate().is_ok());
        assert_eq!(FeatureConfig::default().sigma().unwrap(), 6.0);
        let even = FeatureConfig {
            window_size: 24,
            ..Default::default()
        };
        assert!(matches!(even.validate(), Err(Error::EvenWindowSize(24))));
        let covers_zero = FeatureConfig {
            fat_window: FatWindow::new(-200, 10).unwrap(),
            ..Default::default()
        };
        assert!(covers_zero.validate().is_err());
    }
}
