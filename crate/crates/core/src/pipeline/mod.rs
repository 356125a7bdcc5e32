//! Command-level orchestration: configuration, synthetic phantoms, overlays
//! and the stage functions behind each CLI subcommand.
//!
//! Every `cmd_*` function reads its inputs from disk, calls into the library
//! and writes its outputs; no state is carried between calls.

mod config;
pub mod phantom;

pub use config::{EvalConfig, PipelineConfig};

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::classifier::{load_model, save_model, segment_scan, train_forest, Forest};
use crate::error::{Error, Result};
use crate::evaluation::{cross_validate, dice_from_counts, evaluate, overlap_counts, percentage_split, Metrics, Table};
use crate::features::{build_dataset, read_arff, write_arff, Dataset};
use crate::imaging::{
    fat_area, load_mask, load_masks, load_scan, read_binary_png, resample_nearest, rescale_to_spacing, save_masks,
    save_scan, write_rgb_png, CtScan, HuSlice, Label, LabelMask, Raster,
};
use crate::registration::{build_atlas, load_atlas, register_scan, save_atlas, Atlas, RegistrationTransform};
use phantom::{write_phantom_corpus, PhantomTruth};

/// HU range mapped onto the grey ramp of overlay images.
pub const OVERLAY_WINDOW: (i16, i16) = (-200, 500);
pub const EPICARDIAL_RGB: [u8; 3] = [255, 0, 0];
pub const MEDIASTINAL_RGB: [u8; 3] = [0, 255, 0];
pub const OVERLAY_DIR: &str = "overlay";

/// Grey display of the slice with epicardial pixels red and mediastinal green.
pub fn overlay(slice: &HuSlice, mask: &LabelMask) -> Result<Raster<[u8; 3]>> {
    if !slice.raster().same_dims(mask) {
        return Err(Error::DimensionMismatch(format!(
            "slice is {}x{}, mask is {}x{}",
            slice.width(),
            slice.height(),
            mask.width(),
            mask.height()
        )));
    }
    let (lo, hi) = (OVERLAY_WINDOW.0 as f64, OVERLAY_WINDOW.1 as f64);
    Ok(Raster::from_fn(slice.width(), slice.height(), |x, y| match mask.get(x, y) {
        Label::Epicardial => EPICARDIAL_RGB,
        Label::Mediastinal => MEDIASTINAL_RGB,
        _ => {
            let g = ((slice.get(x, y) as f64 - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8;
            [g, g, g]
        }
    }))
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "png") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Build an atlas from every binary PNG in `patch_dir` and save it to `out`.
pub fn cmd_atlas(patch_dir: &Path, out: &Path, cfg: &PipelineConfig) -> Result<Atlas> {
    let patches = png_files(patch_dir)?
        .iter()
        .map(|p| read_binary_png(p))
        .collect::<Result<Vec<_>>>()?;
    let atlas = build_atlas(&patches)?;
    save_atlas(&atlas, out, &cfg.registration.wmi)?;
    Ok(atlas)
}

/// Resample every slice (and mask) to the standard spacing.
pub fn standardise(scan: &CtScan, masks: Option<Vec<LabelMask>>, spacing: f64) -> Result<(CtScan, Option<Vec<LabelMask>>)> {
    let (sx, sy) = scan.spacing();
    if sx == spacing && sy == spacing {
        return Ok((scan.clone(), masks));
    }
    let out = scan.map_slices(|s| rescale_to_spacing(s, spacing))?;
    let masks = masks
        .map(|ms| ms.iter().map(|m| resample_nearest(m, sx, sy, spacing)).collect::<Result<Vec<_>>>())
        .transpose()?;
    Ok((out, masks))
}

pub struct RegisterArgs<'a> {
    pub scan_dir: &'a Path,
    /// Overrides the atlas path from the configuration.
    pub atlas: Option<&'a Path>,
    pub out_dir: &'a Path,
    /// Masks in the scan's frame, moved with the same transform.
    pub masks: Option<&'a Path>,
    /// Where moved masks go; defaults to `<out_dir>/masks`.
    pub masks_out: Option<&'a Path>,
}

pub fn cmd_register(args: &RegisterArgs, cfg: &PipelineConfig) -> Result<RegistrationTransform> {
    let atlas_path = args
        .atlas
        .or(cfg.atlas.as_deref())
        .ok_or_else(|| Error::InvalidParameter("no atlas given on the command line or in the config".into()))?;
    let (atlas, wmi) = load_atlas(atlas_path)?;
    let scan = load_scan(args.scan_dir)?;
    let masks = args.masks.map(|d| load_masks(d, &scan)).transpose()?;
    let (scan, masks) = standardise(&scan, masks, cfg.standard_spacing_mm)?;
    let params = crate::registration::RegistrationParams {
        wmi,
        ..cfg.registration_params()
    };
    let (registered, t) = register_scan(&scan, &atlas, &params)?;
    save_scan(&registered, args.out_dir)?;
    if let Some(masks) = masks {
        let moved: Vec<LabelMask> = masks.iter().map(|m| t.apply_mask(m)).collect();
        let dir = args.masks_out.map_or_else(|| args.out_dir.join("masks"), Path::to_path_buf);
        save_masks(&dir, &registered, &moved)?;
    }
    Ok(t)
}

/// One dataset from `(scan_dir, mask_dir)` pairs.
pub fn cmd_features(pairs: &[(PathBuf, PathBuf)], out: &Path, cfg: &PipelineConfig) -> Result<Dataset> {
    let loaded = pairs
        .par_iter()
        .map(|(s, m)| {
            let scan = load_scan(s)?;
            let masks = load_masks(m, &scan)?;
            Ok((scan, masks))
        })
        .collect::<Result<Vec<_>>>()?;
    let (scans, masks): (Vec<_>, Vec<_>) = loaded.into_iter().unzip();
    let data = build_dataset(&scans, &masks, &cfg.feature_config())?;
    write_arff(&data, out)?;
    Ok(data)
}

pub fn cmd_train(arff: &Path, out: &Path, cfg: &PipelineConfig) -> Result<Forest> {
    let data = read_arff(arff)?;
    let forest = train_forest(&data, &cfg.forest)?;
    save_model(&forest, out)?;
    Ok(forest)
}

/// Segment a registered scan; writes one mask per slice into `out_dir` and
/// overlays into `<out_dir>/overlay`. Returns per-slice fat areas in mm².
pub fn cmd_segment(scan_dir: &Path, model: &Path, out_dir: &Path) -> Result<(Vec<LabelMask>, Table)> {
    let forest = load_model(model)?;
    let scan = load_scan(scan_dir)?;
    let masks = segment_scan(&scan, &forest)?;
    save_masks(out_dir, &scan, &masks)?;
    let overlay_dir = out_dir.join(OVERLAY_DIR);
    fs::create_dir_all(&overlay_dir).map_err(|e| Error::io(&overlay_dir, e))?;
    scan.slices()
        .par_iter()
        .zip(&masks)
        .try_for_each(|(s, m)| {
            let name = crate::imaging::slice_file_name(&scan.patient_id, s.z_index());
            write_rgb_png(&overlay_dir.join(name), &overlay(s, m)?)
        })?;

    let mut areas = Table::new(&["slice", "epicardial_mm2", "mediastinal_mm2", "other_mm2"]);
    let (sx, sy) = scan.spacing();
    for (s, m) in scan.slices().iter().zip(&masks) {
        let a = fat_area(m, sx, sy);
        let row: Vec<Option<f64>> = Label::FAT_CLASSES.iter().map(|&l| Some(a.get(l))).collect();
        areas.push(&crate::imaging::slice_file_name(&scan.patient_id, s.z_index()), &row);
    }
    Ok((masks, areas))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Hold-out split with the configured fraction (66% by default).
    Split,
    /// k-fold cross-validation with the configured fold count.
    CrossValidation,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "split66" | "split" => Ok(EvalMode::Split),
            "cv10" | "cv" => Ok(EvalMode::CrossValidation),
            other => Err(Error::InvalidParameter(format!("unknown evaluation mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub metrics: Metrics,
    /// Mean of per-fold accuracies, cross-validation only.
    pub fold_mean_accuracy: Option<f64>,
    pub train_rows: usize,
    pub test_rows: usize,
}

impl EvalReport {
    /// Per-class rates plus an `overall` row carrying the accuracy.
    pub fn table(&self) -> Table {
        let mut t = self.metrics.table(None);
        t.push_fractions("overall", &[self.metrics.accuracy, None, None, None, None]);
        t
    }

    pub fn to_text(&self) -> String {
        let mut s = match self.mode {
            EvalMode::Split => format!("hold-out split: {} train, {} test rows\n", self.train_rows, self.test_rows),
            EvalMode::CrossValidation => format!("cross-validation over {} rows\n", self.test_rows),
        };
        s.push_str(&self.table().to_text());
        let pct = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |a| format!("{:.1}%", a * 100.0));
        s.push_str(&format!("accuracy: {}\n", pct(self.metrics.accuracy)));
        if self.mode == EvalMode::CrossValidation {
            s.push_str(&format!("mean fold accuracy: {}\n", pct(self.fold_mean_accuracy)));
        }
        s
    }
}

pub fn cmd_eval(arff: &Path, mode: EvalMode, cfg: &PipelineConfig) -> Result<EvalReport> {
    let data = read_arff(arff)?;
    let e = &cfg.evaluation;
    match mode {
        EvalMode::Split => {
            let (train, test) = percentage_split(&data, e.split_fraction, e.seed)?;
            let forest = train_forest(&train, &cfg.forest)?;
            Ok(EvalReport {
                mode,
                metrics: evaluate(&forest, &test)?,
                fold_mean_accuracy: None,
                train_rows: train.len(),
                test_rows: test.len(),
            })
        }
        EvalMode::CrossValidation => {
            let cv = cross_validate(&data, e.folds, e.seed, e.stratified, |d| train_forest(d, &cfg.forest))?;
            Ok(EvalReport {
                mode,
                metrics: cv.pooled,
                fold_mean_accuracy: cv.fold_mean_accuracy,
                train_rows: data.len(),
                test_rows: data.len(),
            })
        }
    }
}

/// Dice per fat class for every mask in `pred_dir` against the file of the
/// same name in `truth_dir`, as percentages, plus an `all` row over the pooled counts.
pub fn cmd_dice(pred_dir: &Path, truth_dir: &Path) -> Result<Table> {
    let files = png_files(pred_dir)?;
    let per_file = files
        .par_iter()
        .map(|p| {
            let name = p.file_name().expect("listed files have names");
            let truth_path = truth_dir.join(name);
            if !truth_path.is_file() {
                return Err(Error::AlignmentMismatch(format!("no truth mask {}", truth_path.display())));
            }
            let (pred, truth) = (load_mask(p)?, load_mask(&truth_path)?);
            let counts = Label::FAT_CLASSES
                .iter()
                .map(|&l| overlap_counts(&truth, &pred, l))
                .collect::<Result<Vec<_>>>()?;
            Ok((name.to_string_lossy().into_owned(), counts))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut t = Table::new(&["mask", "epicardial", "mediastinal", "other"]);
    let mut pooled = [(0u64, 0u64, 0u64); 3];
    for (name, counts) in &per_file {
        let dice: Vec<Option<f64>> = counts.iter().map(|&(tp, fp, fn_)| Some(dice_from_counts(tp, fp, fn_))).collect();
        t.push_fractions(name, &dice);
        for (acc, c) in pooled.iter_mut().zip(counts) {
            acc.0 += c.0;
            acc.1 += c.1;
            acc.2 += c.2;
        }
    }
    if !per_file.is_empty() {
        let all: Vec<Option<f64>> = pooled.iter().map(|&(tp, fp, fn_)| Some(dice_from_counts(tp, fp, fn_))).collect();
        t.push_fractions("all", &all);
    }
    Ok(t)
}

pub fn cmd_phantom(seed: u64, count: usize, out: &Path, cfg: &PipelineConfig) -> Result<Vec<PhantomTruth>> {
    write_phantom_corpus(seed, count, &cfg.phantom_params(), (64, 32), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_colours() {
        let raster = Raster::from_fn(4, 1, |x, _| [-1000, -200, 150, 500][x]);
        let slice = HuSlice::new(raster, 1.0, 1.0, 0).unwrap();
        let mut mask = LabelMask::filled(4, 1, Label::Background);
        let img = overlay(&slice, &mask).unwrap();
        assert_eq!(img.data(), &[[0; 3], [0; 3], [128; 3], [255; 3]]);
        mask.set(0, 0, Label::Epicardial);
        mask.set(1, 0, Label::Mediastinal);
        mask.set(2, 0, Label::OtherFat);
        let img = overlay(&slice, &mask).unwrap();
        assert_eq!(img.data(), &[EPICARDIAL_RGB, MEDIASTINAL_RGB, [128; 3], [255; 3]]);
        assert!(overlay(&slice, &LabelMask::filled(2, 2, Label::Background)).is_err());
    }

    #[test]
    fn eval_mode_names() {
        assert_eq!("split66".parse::<EvalMode>().unwrap(), EvalMode::Split);
        assert_eq!("cv10".parse::<EvalMode>().unwrap(), EvalMode::CrossValidation);
        assert!("loo".parse::<EvalMode>().is_err());
    }

    #[test]
    fn standardise_rescales_masks_with_slices() {
        let raster = Raster::from_fn(10, 10, |x, _| x as i16);
        let scan = CtScan::new("p", vec![HuSlice::new(raster, 1.4, 1.4, 0).unwrap()], 1.0).unwrap();
        let mask = LabelMask::from_fn(10, 10, |x, _| if x < 5 { Label::Epicardial } else { Label::Background });
        let (s, m) = standardise(&scan, Some(vec![mask]), 0.7).unwrap();
        assert_eq!(s.dims(), (20, 20));
        assert_eq!(m.unwrap()[0].dims(), (20, 20));
        let (same, _) = standardise(&s, None, 0.7).unwrap();
        assert_eq!(same.slices()[0].raster(), s.slices()[0].raster());
    }
}
