//! CT slice rasters, Hounsfield windowing, spacing rescale and fat quantification.
//!
//! Slices hold signed 16-bit Hounsfield units. Windowing to the fat range
//! produces either a binary mask or a "fat-windowed" raster in which every
//! pixel outside the window is replaced by the background sentinel `0`.
//! Because the default fat window lies strictly below 0 HU, the sentinel is
//! never confused with a fat value.

mod io;
mod raster;

pub use io::{
    load_mask, load_masks, load_scan, read_binary_png, read_hu_png, save_mask, save_masks, save_scan,
    slice_file_name, write_binary_png, write_hu_png, write_rgb_png, ScanMetadata, SCAN_SIDECAR,
};
pub use raster::Raster;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registration::RegistrationTransform;

pub const HU_MIN: i16 = -1024;
pub const HU_MAX: i16 = 3071;

/// Value written for every pixel outside the fat window.
pub const BACKGROUND: i16 = 0;

/// 1 = fat-range pixel, 0 = background.
pub type BinarySlice = Raster<u8>;

/// Fat-windowed HU raster: HU inside the window, [`BACKGROUND`] elsewhere.
pub type FatRaster = Raster<i16>;

pub type LabelMask = Raster<Label>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    #[default]
    Background = 0,
    Epicardial = 1,
    Mediastinal = 2,
    OtherFat = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [
        Label::Background,
        Label::Epicardial,
        Label::Mediastinal,
        Label::OtherFat,
    ];

    /// The three labels a classifier can predict, in schema order.
    pub const FAT_CLASSES: [Label; 3] = [Label::Epicardial, Label::Mediastinal, Label::OtherFat];

    pub fn from_index(index: u8) -> Option<Label> {
        Label::ALL.get(index as usize).copied()
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    /// Class name used in datasets and reports.
    pub fn name(self) -> &'static str {
        match self {
            Label::Background => "background",
            Label::Epicardial => "epicardial",
            Label::Mediastinal => "mediastinal",
            Label::OtherFat => "other",
        }
    }

    pub fn from_name(name: &str) -> Option<Label> {
        Label::ALL.into_iter().find(|l| l.name() == name)
    }
}

/// Closed HU interval that counts as fat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FatWindow {
    pub lo: i16,
    pub hi: i16,
}

impl Default for FatWindow {
    fn default() -> Self {
        Self { lo: -200, hi: -30 }
    }
}

impl FatWindow {
    pub fn new(lo: i16, hi: i16) -> Result<Self> {
        if lo >= hi {
            return Err(Error::InvalidParameter(format!(
                "fat window lower bound {lo} must be below upper bound {hi}"
            )));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn contains(&self, hu: i16) -> bool {
        self.lo <= hu && hu <= self.hi
    }

    /// Number of integer HU values in the window.
    pub fn span(&self) -> i32 {
        self.hi as i32 - self.lo as i32 + 1
    }
}

/// One axial CT slice in Hounsfield units.
#[derive(Debug, Clone, PartialEq)]
pub struct HuSlice {
    raster: Raster<i16>,
    spacing_x: f64,
    spacing_y: f64,
    z_index: u32,
}

impl HuSlice {
    pub fn new(raster: Raster<i16>, spacing_x: f64, spacing_y: f64, z_index: u32) -> Result<Self> {
        if !(spacing_x > 0.0 && spacing_x.is_finite() && spacing_y > 0.0 && spacing_y.is_finite()) {
            return Err(Error::InvalidSlice(format!(
                "pixel spacing must be positive, got {spacing_x} x {spacing_y}"
            )));
        }
        if let Some(v) = raster.data().iter().find(|&&v| !(HU_MIN..=HU_MAX).contains(&v)) {
            return Err(Error::InvalidSlice(format!(
                "HU value {v} outside [{HU_MIN}, {HU_MAX}]"
            )));
        }
        Ok(Self {
            raster,
            spacing_x,
            spacing_y,
            z_index,
        })
    }

    pub fn raster(&self) -> &Raster<i16> {
        &self.raster
    }

    pub fn width(&self) -> usize {
        self.raster.width()
    }

    pub fn height(&self) -> usize {
        self.raster.height()
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.spacing_x, self.spacing_y)
    }

    pub fn z_index(&self) -> u32 {
        self.z_index
    }

    pub fn get(&self, x: usize, y: usize) -> i16 {
        self.raster.get(x, y)
    }

    /// Same geometry, new pixel values. HU range is re-validated.
    pub fn with_raster(&self, raster: Raster<i16>) -> Result<Self> {
        HuSlice::new(raster, self.spacing_x, self.spacing_y, self.z_index)
    }
}

/// Ordered stack of slices from one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct CtScan {
    pub patient_id: String,
    slices: Vec<HuSlice>,
    pub slice_thickness_mm: f64,
    /// Set once the scan has been translated into the common frame.
    pub registration: Option<RegistrationTransform>,
}

impl CtScan {
    pub fn new(patient_id: impl Into<String>, slices: Vec<HuSlice>, slice_thickness_mm: f64) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidSlice("scan has no slices".into()))?;
        for pair in slices.windows(2) {
            if pair[1].z_index <= pair[0].z_index {
                return Err(Error::InvalidSlice(format!(
                    "z indices must be strictly increasing ({} then {})",
                    pair[0].z_index, pair[1].z_index
                )));
            }
        }
        for s in &slices[1..] {
            if s.width() != first.width()
                || s.height() != first.height()
                || s.spacing() != first.spacing()
            {
                return Err(Error::DimensionMismatch(format!(
                    "slice z={} is {}x{} @ {:?}, expected {}x{} @ {:?}",
                    s.z_index,
                    s.width(),
                    s.height(),
                    s.spacing(),
                    first.width(),
                    first.height(),
                    first.spacing()
                )));
            }
        }
        Ok(Self {
            patient_id: patient_id.into(),
            slices,
            slice_thickness_mm,
            registration: None,
        })
    }

    pub fn slices(&self) -> &[HuSlice] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.slices[0].width(), self.slices[0].height())
    }

    pub fn spacing(&self) -> (f64, f64) {
        self.slices[0].spacing()
    }

    /// Apply `f` to every slice, keeping patient and registration metadata.
    pub fn map_slices(&self, f: impl FnMut(&HuSlice) -> Result<HuSlice>) -> Result<CtScan> {
        let slices = self.slices.iter().map(f).collect::<Result<Vec<_>>>()?;
        let mut out = CtScan::new(self.patient_id.clone(), slices, self.slice_thickness_mm)?;
        out.registration = self.registration;
        Ok(out)
    }
}

/// Binary fat mask: 1 iff `lo <= HU <= hi`.
pub fn window_fat(slice: &HuSlice, window: FatWindow) -> BinarySlice {
    slice.raster.map(|v| u8::from(window.contains(v)))
}

/// Keep HU inside the window, replace everything else by [`BACKGROUND`].
pub fn apply_fat_window(slice: &HuSlice, window: FatWindow) -> FatRaster {
    slice
        .raster
        .map(|v| if window.contains(v) { v } else { BACKGROUND })
}

/// Nearest-neighbour resample of an arbitrary raster from `(src_x, src_y)` mm/pixel
/// to an isotropic `target` mm/pixel.
pub fn resample_nearest<T: Copy>(raster: &Raster<T>, src_x: f64, src_y: f64, target: f64) -> Result<Raster<T>> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target spacing must be positive, got {target}"
        )));
    }
    let (w, h) = raster.dims();
    let new_w = (w as f64 * src_x / target).round() as usize;
    let new_h = (h as f64 * src_y / target).round() as usize;
    if new_w == 0 || new_h == 0 {
        return Err(Error::DegenerateDimensions {
            width: new_w,
            height: new_h,
        });
    }
    let fx = target / src_x;
    let fy = target / src_y;
    let map_x: Vec<usize> = (0..new_w)
        .map(|ox| (((ox as f64 + 0.5) * fx).floor() as usize).min(w - 1))
        .collect();
    let map_y: Vec<usize> = (0..new_h)
        .map(|oy| (((oy as f64 + 0.5) * fy).floor() as usize).min(h - 1))
        .collect();
    Ok(Raster::from_fn(new_w, new_h, |x, y| raster.get(map_x[x], map_y[y])))
}

/// Resample a slice to isotropic `target_spacing` mm/pixel (nearest neighbour).
pub fn rescale_to_spacing(slice: &HuSlice, target_spacing: f64) -> Result<HuSlice> {
    let (sx, sy) = slice.spacing();
    let raster = resample_nearest(&slice.raster, sx, sy, target_spacing)?;
    HuSlice::new(raster, target_spacing, target_spacing, slice.z_index)
}

/// Per-class area (mm²) or volume (mm³), indexed by [`Label`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassAreas([f64; 4]);

impl ClassAreas {
    pub fn get(&self, label: Label) -> f64 {
        self.0[label as usize]
    }

    pub fn total_fat(&self) -> f64 {
        self.0[1..].iter().sum()
    }

    fn scale(self, k: f64) -> Self {
        ClassAreas(self.0.map(|v| v * k))
    }
}

impl std::ops::Add for ClassAreas {
    type Output = ClassAreas;

    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        for (a, b) in out.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
        out
    }
}

pub fn class_counts(mask: &LabelMask) -> [usize; 4] {
    let mut counts = [0usize; 4];
    for &l in mask.data() {
        counts[l as usize] += 1;
    }
    counts
}

/// Pixel count per class times the pixel area.
pub fn fat_area(mask: &LabelMask, spacing_x: f64, spacing_y: f64) -> ClassAreas {
    let px = spacing_x * spacing_y;
    let counts = class_counts(mask);
    ClassAreas(counts.map(|c| c as f64 * px))
}

/// Fat-range area of a binary slice in mm².
pub fn binary_fat_area(mask: &BinarySlice, spacing_x: f64, spacing_y: f64) -> f64 {
    let n = mask.data().iter().filter(|&&v| v != 0).count();
    n as f64 * spacing_x * spacing_y
}

/// Slab-sum volume (mm³): area of each mask times slice thickness.
pub fn fat_volume(masks: &[LabelMask], spacing_x: f64, spacing_y: f64, slice_thickness_mm: f64) -> ClassAreas {
    masks
        .iter()
        .map(|m| fat_area(m, spacing_x, spacing_y))
        .fold(ClassAreas::default(), |acc, a| acc + a)
        .scale(slice_thickness_mm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn slice_of(w: usize, h: usize, values: Vec<i16>, spacing: f64) -> HuSlice {
        HuSlice::new(Raster::new(w, h, values).unwrap(), spacing, spacing, 0).unwrap()
    }

    #[test]
    fn window_is_closed_at_both_ends() {
        let s = slice_of(6, 1, vec![-100, -200, -30, -201, -29, 0], 1.0);
        let b = window_fat(&s, FatWindow::default());
        assert_eq!(b.data(), &[1, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn uniform_water_slice_has_no_fat() {
        let s = slice_of(4, 4, vec![0; 16], 1.0);
        assert!(window_fat(&s, FatWindow::default()).data().iter().all(|&v| v == 0));
    }

    #[test]
    fn fat_windowed_raster_uses_zero_sentinel() {
        let s = slice_of(3, 1, vec![-100, 500, -1000], 1.0);
        assert_eq!(apply_fat_window(&s, FatWindow::default()).data(), &[-100, 0, 0]);
    }

    #[test]
    fn rejects_out_of_range_hu_and_bad_spacing() {
        let r = Raster::new(1, 1, vec![-1025]).unwrap();
        assert!(HuSlice::new(r, 1.0, 1.0, 0).is_err());
        let r = Raster::new(1, 1, vec![0]).unwrap();
        assert!(HuSlice::new(r, 0.0, 1.0, 0).is_err());
        assert!(FatWindow::new(-30, -200).is_err());
    }

    #[test]
    fn rescale_identity_at_same_spacing() {
        let vals: Vec<i16> = (0..35).map(|v| v as i16 * 7 - 100).collect();
        let s = slice_of(7, 5, vals, 0.7);
        assert_eq!(rescale_to_spacing(&s, 0.7).unwrap(), s);
    }

    #[test]
    fn rescale_halves_dimensions() {
        let s = slice_of(512, 512, vec![0; 512 * 512], 0.5);
        let r = rescale_to_spacing(&s, 1.0).unwrap();
        assert_eq!((r.width(), r.height()), (256, 256));
        assert_eq!(r.spacing(), (1.0, 1.0));
    }

    #[test]
    fn rescale_checkerboard_upscale_matches_coordinate_oracle() {
        let board: Vec<i16> = (0..9).map(|i| if i % 2 == 0 { -100 } else { 40 }).collect();
        let s = slice_of(3, 3, board.clone(), 1.0);
        let r = rescale_to_spacing(&s, 0.5).unwrap();
        assert_eq!((r.width(), r.height()), (6, 6));
        // Each output pixel centre (o + 0.5) * 0.5 mm lies in source pixel floor of that.
        for oy in 0..6 {
            for ox in 0..6 {
                let (sx, sy) = (ox / 2, oy / 2);
                assert_eq!(r.get(ox, oy), board[sy * 3 + sx], "({ox},{oy})");
            }
        }
    }

    #[test]
    fn rescale_to_nothing_is_degenerate() {
        let s = slice_of(2, 2, vec![0; 4], 0.1);
        assert!(matches!(
            rescale_to_spacing(&s, 10.0),
            Err(Error::DegenerateDimensions { .. })
        ));
        assert!(rescale_to_spacing(&s, -1.0).is_err());
    }

    #[test]
    fn empty_mask_has_zero_area() {
        let m = LabelMask::filled(5, 5, Label::Background);
        let a = fat_area(&m, 0.5, 0.5);
        for l in Label::FAT_CLASSES {
            assert_eq!(a.get(l), 0.0);
        }
    }

    #[test]
    fn ten_epicardial_pixels_at_half_mm() {
        let mut m = LabelMask::filled(10, 10, Label::Background);
        for x in 0..10 {
            m.set(x, 3, Label::Epicardial);
        }
        assert_eq!(fat_area(&m, 0.5, 0.5).get(Label::Epicardial), 2.5);
        assert_eq!(fat_volume(&[m.clone(), m], 0.5, 0.5, 2.0).get(Label::Epicardial), 10.0);
    }

    fn label_strategy() -> impl Strategy<Value = Label> {
        (0u8..4).prop_map(|i| Label::from_index(i).unwrap())
    }

    proptest! {
        #[test]
        fn fat_area_matches_naive_tally(labels in prop::collection::vec(label_strategy(), 64), sx in 0.1f64..2.0, sy in 0.1f64..2.0) {
            let m = LabelMask::new(8, 8, labels.clone()).unwrap();
            let a = fat_area(&m, sx, sy);
            for l in Label::ALL {
                let mut n = 0usize;
                for y in 0..8 {
                    for x in 0..8 {
                        if m.get(x, y) == l { n += 1; }
                    }
                }
                prop_assert!((a.get(l) - n as f64 * sx * sy).abs() < 1e-9);
            }
            // permutation invariance
            let mut rev = labels;
            rev.reverse();
            let b = fat_area(&LabelMask::new(8, 8, rev).unwrap(), sx, sy);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn fat_area_is_additive_over_disjoint_masks(labels in prop::collection::vec(label_strategy(), 36), split in 0usize..36) {
            let full = LabelMask::new(6, 6, labels.clone()).unwrap();
            let first: Vec<Label> = labels.iter().enumerate().map(|(i, &l)| if i < split { l } else { Label::Background }).collect();
            let second: Vec<Label> = labels.iter().enumerate().map(|(i, &l)| if i >= split { l } else { Label::Background }).collect();
            let a = fat_area(&LabelMask::new(6, 6, first).unwrap(), 0.7, 0.7);
            let b = fat_area(&LabelMask::new(6, 6, second).unwrap(), 0.7, 0.7);
            let f = fat_area(&full, 0.7, 0.7);
            for l in Label::FAT_CLASSES {
                prop_assert!((a.get(l) + b.get(l) - f.get(l)).abs() < 1e-9);
            }
        }

        #[test]
        fn window_is_idempotent_on_its_output(values in prop::collection::vec(HU_MIN..=HU_MAX, 25)) {
            let w = FatWindow::default();
            let s = slice_of(5, 5, values, 1.0);
            let once = window_fat(&s, w);
            // Re-encode 1 -> lo, 0 -> a value outside the window, then window again.
            let reencoded = s.with_raster(once.map(|b| if b == 1 { w.lo } else { 0 })).unwrap();
            prop_assert_eq!(window_fat(&reencoded, w), once);
        }

        #[test]
        fn rescale_to_source_spacing_is_identity(values in prop::collection::vec(-1024i16..3071, 30), spacing in 0.2f64..2.0) {
            let s = slice_of(6, 5, values, spacing);
            prop_assert_eq!(rescale_to_spacing(&s, spacing).unwrap(), s);
        }
    }
}
