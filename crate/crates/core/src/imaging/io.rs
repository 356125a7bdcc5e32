//! On-disk layout of scans and masks.
//!
//! A scan directory holds one 16-bit grayscale PNG per slice named
//! `<patient>_<zzz>.png` (pixel = HU + 1024) plus a `scan.json` sidecar.
//! Masks are 8-bit indexed PNGs with the same file names.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BinarySlice, CtScan, HuSlice, Label, LabelMask, Raster, HU_MAX, HU_MIN};
use crate::error::{Error, Result};
use crate::registration::RegistrationTransform;

pub const SCAN_SIDECAR: &str = "scan.json";

const HU_OFFSET: i32 = 1024;

/// Palette for mask PNGs, indexed by [`Label`].
const MASK_PALETTE: [u8; 12] = [0, 0, 0, 255, 0, 0, 0, 255, 0, 255, 255, 0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMetadata {
    pub patient_id: String,
    pub spacing_x_mm: f64,
    pub spacing_y_mm: f64,
    pub slice_thickness_mm: f64,
    pub slice_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registration: Option<RegistrationTransform>,
}

pub fn slice_file_name(patient_id: &str, z: u32) -> String {
    format!("{patient_id}_{z:03}.png")
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptImage {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn open_png(path: &Path) -> Result<png::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| corrupt(path, e.to_string()))
}

fn read_frame(path: &Path, reader: &mut png::Reader<BufReader<File>>) -> Result<Vec<u8>> {
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| corrupt(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| corrupt(path, e.to_string()))?;
    buf.truncate(info.buffer_size());
    Ok(buf)
}

fn write_png(path: &Path, width: usize, height: usize, setup: impl FnOnce(&mut png::Encoder<BufWriter<File>>), data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    setup(&mut enc);
    let to_io = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => corrupt(path, other.to_string()),
    };
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(data).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

/// Write HU values as a 16-bit grayscale PNG storing `HU + 1024`.
pub fn write_hu_png(path: &Path, raster: &Raster<i16>) -> Result<()> {
    let mut bytes = Vec::with_capacity(raster.data().len() * 2);
    for &v in raster.data() {
        let stored = (v as i32 + HU_OFFSET).clamp(0, u16::MAX as i32) as u16;
        bytes.extend_from_slice(&stored.to_be_bytes());
    }
    write_png(
        path,
        raster.width(),
        raster.height(),
        |e| {
            e.set_color(png::ColorType::Grayscale);
            e.set_depth(png::BitDepth::Sixteen);
        },
        &bytes,
    )
}

pub fn read_hu_png(path: &Path) -> Result<Raster<i16>> {
    let mut reader = open_png(path)?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if color != png::ColorType::Grayscale || depth != png::BitDepth::Sixteen {
        return Err(corrupt(
            path,
            format!("expected 16-bit grayscale, found {color:?} {depth:?}"),
        ));
    }
    let (w, h) = reader.info().size();
    let buf = read_frame(path, &mut reader)?;
    let mut values = Vec::with_capacity(buf.len() / 2);
    for pair in buf.chunks_exact(2) {
        let hu = u16::from_be_bytes([pair[0], pair[1]]) as i32 - HU_OFFSET;
        if hu < HU_MIN as i32 || hu > HU_MAX as i32 {
            return Err(corrupt(path, format!("stored value maps to {hu} HU")));
        }
        values.push(hu as i16);
    }
    Raster::new(w as usize, h as usize, values).map_err(|e| corrupt(path, e.to_string()))
}

/// Binary image as 8-bit grayscale, 0 or 255.
pub fn write_binary_png(path: &Path, raster: &BinarySlice) -> Result<()> {
    let bytes: Vec<u8> = raster.data().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    write_png(
        path,
        raster.width(),
        raster.height(),
        |e| {
            e.set_color(png::ColorType::Grayscale);
            e.set_depth(png::BitDepth::Eight);
        },
        &bytes,
    )
}

/// 8-bit grayscale where any nonzero pixel is set.
pub fn read_binary_png(path: &Path) -> Result<BinarySlice> {
    let mut reader = open_png(path)?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if color != png::ColorType::Grayscale || depth != png::BitDepth::Eight {
        return Err(corrupt(path, format!("expected 8-bit grayscale, found {color:?} {depth:?}")));
    }
    let (w, h) = reader.info().size();
    let buf = read_frame(path, &mut reader)?;
    let bits = buf.iter().map(|&v| u8::from(v != 0)).collect();
    Raster::new(w as usize, h as usize, bits).map_err(|e| corrupt(path, e.to_string()))
}

pub fn write_rgb_png(path: &Path, raster: &Raster<[u8; 3]>) -> Result<()> {
    let bytes: Vec<u8> = raster.data().iter().flatten().copied().collect();
    write_png(
        path,
        raster.width(),
        raster.height(),
        |e| {
            e.set_color(png::ColorType::Rgb);
            e.set_depth(png::BitDepth::Eight);
        },
        &bytes,
    )
}

pub fn save_mask(mask: &LabelMask, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = mask.data().iter().map(|l| l.index()).collect();
    write_png(
        path,
        mask.width(),
        mask.height(),
        |e| {
            e.set_color(png::ColorType::Indexed);
            e.set_depth(png::BitDepth::Eight);
            e.set_palette(MASK_PALETTE.to_vec());
        },
        &bytes,
    )
}

/// Accepts the indexed format written by [`save_mask`] or plain 8-bit grayscale indices.
pub fn load_mask(path: &Path) -> Result<LabelMask> {
    let mut reader = open_png(path)?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if !matches!(color, png::ColorType::Indexed | png::ColorType::Grayscale)
        || depth != png::BitDepth::Eight
    {
        return Err(corrupt(
            path,
            format!("expected 8-bit indexed mask, found {color:?} {depth:?}"),
        ));
    }
    let (w, h) = reader.info().size();
    let buf = read_frame(path, &mut reader)?;
    let labels = buf
        .iter()
        .map(|&i| Label::from_index(i).ok_or_else(|| corrupt(path, format!("unknown label index {i}"))))
        .collect::<Result<Vec<_>>>()?;
    Raster::new(w as usize, h as usize, labels).map_err(|e| corrupt(path, e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("metadata serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write every slice plus the sidecar into `dir` (created if missing).
pub fn save_scan(scan: &CtScan, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in scan.slices() {
        write_hu_png(&dir.join(slice_file_name(&scan.patient_id, s.z_index())), s.raster())?;
    }
    let (sx, sy) = scan.spacing();
    let meta = ScanMetadata {
        patient_id: scan.patient_id.clone(),
        spacing_x_mm: sx,
        spacing_y_mm: sy,
        slice_thickness_mm: scan.slice_thickness_mm,
        slice_count: scan.len(),
        registration: scan.registration,
    };
    write_json(&dir.join(SCAN_SIDECAR), &meta)
}

/// Parse `<patient>_<zzz>.png` into its z index.
fn parse_slice_name(name: &str, patient_id: &str) -> Option<u32> {
    let rest = name.strip_prefix(patient_id)?.strip_prefix('_')?;
    let digits = rest.strip_suffix(".png")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn load_scan(dir: &Path) -> Result<CtScan> {
    let sidecar = dir.join(SCAN_SIDECAR);
    if !sidecar.is_file() {
        return Err(Error::MissingMetadata(sidecar));
    }
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let meta: ScanMetadata = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: sidecar.clone(),
        reason: e.to_string(),
    })?;

    let mut files: Vec<(u32, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if let Some(z) = name.to_str().and_then(|n| parse_slice_name(n, &meta.patient_id)) {
            files.push((z, entry.path()));
        }
    }
    files.sort();
    if files.len() != meta.slice_count {
        return Err(Error::DimensionMismatch(format!(
            "{} declares {} slices, found {}",
            sidecar.display(),
            meta.slice_count,
            files.len()
        )));
    }

    let mut slices = Vec::with_capacity(files.len());
    for (z, path) in &files {
        let raster = read_hu_png(path)?;
        if let Some(first) = slices.first().map(|s: &HuSlice| s.raster().dims()) {
            if raster.dims() != first {
                return Err(Error::DimensionMismatch(format!(
                    "{} is {}x{}, expected {}x{}",
                    path.display(),
                    raster.width(),
                    raster.height(),
                    first.0,
                    first.1
                )));
            }
        }
        slices.push(HuSlice::new(raster, meta.spacing_x_mm, meta.spacing_y_mm, *z)?);
    }
    let mut scan = CtScan::new(meta.patient_id, slices, meta.slice_thickness_mm)?;
    scan.registration = meta.registration;
    Ok(scan)
}

/// One mask per slice, named after the slice it labels.
pub fn save_masks(dir: &Path, scan: &CtScan, masks: &[LabelMask]) -> Result<()> {
    if masks.len() != scan.len() {
        return Err(Error::AlignmentMismatch(format!(
            "{} masks for {} slices",
            masks.len(),
            scan.len()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (s, m) in scan.slices().iter().zip(masks) {
        save_mask(m, &dir.join(slice_file_name(&scan.patient_id, s.z_index())))?;
    }
    Ok(())
}

/// Load the masks matching every slice of `scan` from `dir`.
pub fn load_masks(dir: &Path, scan: &CtScan) -> Result<Vec<LabelMask>> {
    scan.slices()
        .iter()
        .map(|s| {
            let path = dir.join(slice_file_name(&scan.patient_id, s.z_index()));
            if !path.is_file() {
                return Err(Error::AlignmentMismatch(format!("missing mask {}", path.display())));
            }
            let m = load_mask(&path)?;
            if m.dims() != s.raster().dims() {
                return Err(Error::AlignmentMismatch(format!(
                    "{} is {}x{}, slice is {}x{}",
                    path.display(),
                    m.width(),
                    m.height(),
                    s.width(),
                    s.height()
                )));
            }
            Ok(m)
        })
        .collect()
}
