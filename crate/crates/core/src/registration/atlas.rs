use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::wmi::WmiParams;
use crate::error::{Error, Result};
use crate::imaging::{BinarySlice, Raster};

/// Mean of aligned binary retrosternal patches.
///
/// Weights are stored as `count / source_count`, so every weight is an exact
/// multiple of `1 / source_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atlas {
    weights: Raster<f64>,
    source_count: usize,
}

impl Atlas {
    pub fn width(&self) -> usize {
        self.weights.width()
    }

    pub fn height(&self) -> usize {
        self.weights.height()
    }

    pub fn weights(&self) -> &Raster<f64> {
        &self.weights
    }

    pub fn source_count(&self) -> usize {
        self.source_count
    }

    /// Binarised view (weight >= 0.5), handy for synthetic scenes.
    pub fn to_binary(&self) -> BinarySlice {
        self.weights.map(|w| u8::from(w >= 0.5))
    }
}

pub fn build_atlas(patches: &[BinarySlice]) -> Result<Atlas> {
    let first = patches.first().ok_or(Error::EmptyPatchSet)?;
    let mut counts = vec![0u32; first.data().len()];
    for (i, p) in patches.iter().enumerate() {
        if !p.same_dims(first) {
            return Err(Error::DimensionMismatch(format!(
                "patch {i} is {}x{}, expected {}x{}",
                p.width(),
                p.height(),
                first.width(),
                first.height()
            )));
        }
        for (c, &v) in counts.iter_mut().zip(p.data()) {
            *c += u32::from(v != 0);
        }
    }
    Ok(atlas_from_counts(first.width(), first.height(), &counts, patches.len()))
}

fn atlas_from_counts(width: usize, height: usize, counts: &[u32], n: usize) -> Atlas {
    let weights = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Atlas {
        weights: Raster::new(width, height, weights).expect("dimensions checked"),
        source_count: n,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AtlasSidecar {
    source_count: usize,
    bins: usize,
    log_base: f64,
}

fn sidecar_path(png_path: &Path) -> PathBuf {
    png_path.with_extension("json")
}

/// Writes `weight * 65535` as 16-bit grayscale plus a `.json` sidecar next to it.
pub fn save_atlas(atlas: &Atlas, png_path: &Path, params: &WmiParams) -> Result<()> {
    let bytes: Vec<u8> = atlas
        .weights
        .data()
        .iter()
        .flat_map(|&w| ((w * 65535.0).round() as u16).to_be_bytes())
        .collect();
    let file = fs::File::create(png_path).map_err(|e| Error::io(png_path, e))?;
    let mut enc = png::Encoder::new(
        std::io::BufWriter::new(file),
        atlas.width() as u32,
        atlas.height() as u32,
    );
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let fail = |e: png::EncodingError| Error::Format {
        path: png_path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut writer = enc.write_header().map_err(fail)?;
    writer.write_image_data(&bytes).map_err(fail)?;
    writer.finish().map_err(fail)?;

    let side = AtlasSidecar {
        source_count: atlas.source_count,
        bins: params.bins,
        log_base: params.log_base,
    };
    let side_path = sidecar_path(png_path);
    let mut text = serde_json::to_string_pretty(&side).expect("sidecar serializes");
    text.push('\n');
    fs::write(&side_path, text).map_err(|e| Error::io(&side_path, e))
}

/// Inverse of [`save_atlas`]. Weights are snapped back onto the `k / source_count` grid,
/// which makes the round trip exact.
pub fn load_atlas(png_path: &Path) -> Result<(Atlas, WmiParams)> {
    let side_path = sidecar_path(png_path);
    if !side_path.is_file() {
        return Err(Error::MissingMetadata(side_path));
    }
    let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let side: AtlasSidecar = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: side_path.clone(),
        reason: e.to_string(),
    })?;
    if side.source_count == 0 {
        return Err(Error::Format {
            path: side_path,
            reason: "source_count must be positive".into(),
        });
    }
    let params = WmiParams::new(side.bins, side.log_base)?;

    let corrupt = |reason: String| Error::CorruptImage {
        path: png_path.to_path_buf(),
        reason,
    };
    let file = fs::File::open(png_path).map_err(|e| Error::io(png_path, e))?;
    let mut reader = png::Decoder::new(std::io::BufReader::new(file))
        .read_info()
        .map_err(|e| corrupt(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(corrupt("atlas must be 16-bit grayscale".into()));
    }
    let (w, h) = info.size();
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or_else(|| corrupt("too large".into()))?];
    reader.next_frame(&mut buf).map_err(|e| corrupt(e.to_string()))?;
    let n = side.source_count;
    let counts: Vec<u32> = buf
        .chunks_exact(2)
        .map(|b| {
            let v = u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0;
            (v * n as f64).round() as u32
        })
        .collect();
    if counts.len() != (w * h) as usize {
        return Err(corrupt("short pixel buffer".into()));
    }
    Ok((atlas_from_counts(w as usize, h as usize, &counts, n), params))
}
