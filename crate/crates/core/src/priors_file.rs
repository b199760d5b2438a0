//! Priors on disk: a JSON index with `A`, optional `alpha`, and `T` / `d`
//! maps stored next to it as little-endian `f32` (`.f32`) or 16-bit PNG (`.png`).
//!
//! Maps are row-major; `T` interleaves its three channels per pixel. In
//! PNG16, `T` is scaled by 65535 and `d` is stored in thousandths.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Planes;
use crate::physical::{DepthMap, UnderwaterPriors, EPS_T};

/// Fixed-point step of depth maps in PNG16 files.
pub const DEPTH_PNG_SCALE: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapFormat {
    F32,
    Png16,
}

impl MapFormat {
    fn ext(self) -> &'static str {
        match self {
            MapFormat::F32 => "f32",
            MapFormat::Png16 => "png",
        }
    }

    fn of(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("f32") | Some("bin") | Some("raw") => Ok(MapFormat::F32),
            Some("png") => Ok(MapFormat::Png16),
            _ => Err(Error::Format(format!("{}: map files must be .f32 or .png", path.display()))),
        }
    }
}

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorsIndex {
    pub A: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[f64; 3]>,
    pub T: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<String>,
    /// Needed to shape `.f32` maps.
    pub height: usize,
    pub width: usize,
}

fn write_f32(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(|v| (v as f32).to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * expected {
        return Err(Error::Dimension(format!("{}: {} bytes, expected {}", path.display(), bytes.len(), 4 * expected)));
    }
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect())
}

fn to_u16(v: f64, scale: f64) -> u16 {
    (v * scale).round().clamp(0.0, 65535.0) as u16
}

/// Transmission map from either encoding.
pub fn read_transmission(path: &Path, height: usize, width: usize) -> Result<Planes> {
    let hwc = match MapFormat::of(path)? {
        MapFormat::F32 => read_f32(path, 3 * height * width)?,
        MapFormat::Png16 => {
            let img = image::open(path)?.into_rgb16();
            if (img.height() as usize, img.width() as usize) != (height, width) {
                return Err(Error::Dimension(format!("{}: {}x{}, expected {height}x{width}", path.display(), img.height(), img.width())));
            }
            img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
        }
    };
    Ok(Planes::from_fn(height, width, |c, y, x| hwc[(y * width + x) * 3 + c]))
}

pub fn write_transmission(path: &Path, t: &Planes) -> Result<()> {
    let (h, w) = (t.height, t.width);
    let hwc = (0..h * w * 3).map(|i| t.get(i % 3, i / 3 / w, (i / 3) % w));
    match MapFormat::of(path)? {
        MapFormat::F32 => write_f32(path, hwc),
        MapFormat::Png16 => {
            let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
                ImageBuffer::from_raw(w as u32, h as u32, hwc.map(|v| to_u16(v, 65535.0)).collect()).expect("buffer size");
            buf.save(path)?;
            Ok(())
        }
    }
}

/// Depth map; without known dimensions a PNG16 supplies its own.
pub fn read_depth(path: &Path, dims: Option<(usize, usize)>) -> Result<DepthMap> {
    match MapFormat::of(path)? {
        MapFormat::F32 => {
            let (h, w) = dims.ok_or_else(|| Error::Format(format!("{}: raw depth needs known dimensions", path.display())))?;
            DepthMap::new(h, w, read_f32(path, h * w)?)
        }
        MapFormat::Png16 => {
            let img = image::open(path)?.into_luma16();
            let (h, w) = (img.height() as usize, img.width() as usize);
            if let Some(d) = dims {
                if d != (h, w) {
                    return Err(Error::Dimension(format!("{}: {h}x{w}, expected {}x{}", path.display(), d.0, d.1)));
                }
            }
            DepthMap::new(h, w, img.into_raw().into_iter().map(|v| v as f64 / DEPTH_PNG_SCALE).collect())
        }
    }
}

pub fn write_depth(path: &Path, d: &DepthMap) -> Result<()> {
    match MapFormat::of(path)? {
        MapFormat::F32 => write_f32(path, d.data.iter().copied()),
        MapFormat::Png16 => {
            let raw = d.data.iter().map(|&v| to_u16(v, DEPTH_PNG_SCALE)).collect();
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(d.width as u32, d.height as u32, raw).expect("buffer size");
            buf.save(path)?;
            Ok(())
        }
    }
}

fn sibling(json: &Path, suffix: &str, format: MapFormat) -> PathBuf {
    let stem = json.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "priors".into());
    json.with_file_name(format!("{stem}_{suffix}.{}", format.ext()))
}

/// Writes `json` plus `<stem>_T.<ext>` (and `<stem>_d.<ext>` when depth is known).
pub fn save_priors(priors: &UnderwaterPriors, json: &Path, format: MapFormat) -> Result<PriorsIndex> {
    let t_path = sibling(json, "T", format);
    write_transmission(&t_path, &priors.transmission)?;
    let d = match &priors.depth {
        Some(d) => {
            let p = sibling(json, "d", format);
            write_depth(&p, d)?;
            Some(p)
        }
        None => None,
    };
    let name = |p: &Path| p.file_name().unwrap().to_string_lossy().into_owned();
    let index = PriorsIndex {
        A: priors.ambient,
        alpha: priors.alpha,
        T: name(&t_path),
        d: d.as_deref().map(name),
        height: priors.height(),
        width: priors.width(),
    };
    std::fs::write(json, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(json, e))?;
    Ok(index)
}

/// Reads a priors index; map paths are relative to the JSON file.
pub fn load_priors(json: &Path) -> Result<UnderwaterPriors> {
    let text = std::fs::read_to_string(json).map_err(|e| Error::io(json, e))?;
    let index: PriorsIndex = serde_json::from_str(&text)?;
    let base = json.parent().unwrap_or(Path::new("."));
    let t = read_transmission(&base.join(&index.T), index.height, index.width)?;
    let mut p = UnderwaterPriors::with_floor(t, index.A, EPS_T)?;
    p.alpha = index.alpha;
    if let Some(d) = &index.d {
        p.depth = Some(read_depth(&base.join(d), Some((index.height, index.width)))?);
    }
    Ok(p)
}
