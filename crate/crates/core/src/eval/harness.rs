//! Real-bit evaluation of a checkpoint ladder.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::curve::RDCurve;
use crate::bitstream::container::inspect;
use crate::dictionary::{list_images, FeatureDictionary};
use crate::error::{Error, Result};
use crate::image::{Image, Planes};
use crate::rfd::{Ablation, RfdModel};

/// `10 log10(peak^2 / MSE)`; identical inputs give `+inf`.
pub fn psnr(x: &Planes, y: &Planes, peak: f64) -> Result<f64> {
    let mse = crate::training::mse(x, y)?;
    Ok(psnr_from_mse(mse, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// One image at one rate point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub image: String,
    pub lambda: f64,
    pub bpp: f64,
    pub psnr: f64,
    pub bits_z: u64,
    #[serde(rename = "bits_W")]
    pub bits_w: u64,
    pub bits_index: u64,
    pub file_bytes: usize,
}

#[derive(Clone, Debug)]
pub struct EvalOutput {
    pub curve: RDCurve,
    pub rows: Vec<ImageResult>,
}

/// Every `*.ckpt` in `dir`, ordered by lambda.
pub fn load_checkpoints(dir: impl AsRef<Path>) -> Result<Vec<RfdModel>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Configuration(format!("no checkpoints in {}", dir.display())));
    }
    let mut models = paths.iter().map(|p| RfdModel::load(p)).collect::<Result<Vec<_>>>()?;
    models.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(models)
}

/// Named images of a directory, sorted by file name.
pub fn load_images(dir: impl AsRef<Path>) -> Result<Vec<(String, Image)>> {
    list_images(dir.as_ref())?
        .into_iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, Image::load(&p)?))
        })
        .collect()
}

/// Encodes and decodes every image with every model; the curve holds mean
/// `(bpp, PSNR)` per model. Any encoder/decoder disagreement aborts.
pub fn run_eval(
    models: &[RfdModel],
    dict: Option<&FeatureDictionary>,
    images: &[(String, Image)],
    ablation: &Ablation,
    label: &str,
) -> Result<EvalOutput> {
    if models.is_empty() || images.is_empty() {
        return Err(Error::Configuration("evaluation needs at least one checkpoint and one image".into()));
    }
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for model in models {
        let m = model.with_ablation(ablation)?;
        let (mut bpp_sum, mut psnr_sum) = (0.0, 0.0);
        for (name, img) in images {
            let enc = m.encode(img, dict)?;
            let dec = m.decode_planes(&enc.bytes, dict)?;
            if dec != enc.reconstruction {
                return Err(Error::CodecIntegrity(format!(
                    "{name} at lambda {}: decoder differs from encoder by {}",
                    m.lambda,
                    dec.max_abs_diff(&enc.reconstruction)
                )));
            }
            let audit = inspect(&enc.bytes)?;
            let bpp = enc.breakdown.bpp(img.height(), img.width())?;
            if audit.bpp != bpp {
                return Err(Error::CodecIntegrity(format!("{name}: container audit gives {} bpp, encoder {bpp}", audit.bpp)));
            }
            let shown = dec.clamp01();
            let p = psnr(img.planes(), &shown, 1.0)?;
            bpp_sum += bpp;
            psnr_sum += p;
            rows.push(ImageResult {
                image: name.clone(),
                lambda: m.lambda,
                bpp,
                psnr: p,
                bits_z: audit.bits_z,
                bits_w: audit.bits_w,
                bits_index: audit.bits_index,
                file_bytes: enc.bytes.len(),
            });
        }
        let n = images.len() as f64;
        points.push([bpp_sum / n, psnr_sum / n]);
    }
    Ok(EvalOutput { curve: RDCurve::from_unsorted(label, points)?, rows })
}

pub fn write_rows(rows: &[ImageResult], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::BackboneConfig;
    use crate::rfd::RfdConfig;
    use crate::synthetic::underwater_set;

    #[test]
    fn psnr_conventions() {
        let x = Planes::filled(2, 2, [0.5; 3]);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
        assert!((psnr_from_mse(1.0, 255.0) - 48.130803608679).abs() < 1e-9);
        assert_eq!(psnr_from_mse(4.0, 2.0), 0.0);
        assert!(psnr(&x, &Planes::filled(2, 3, [0.5; 3]), 1.0).is_err());
    }

    #[test]
    fn untrained_baseline_accounting() {
        let mut cfg = RfdConfig::baseline(BackboneConfig::toy());
        cfg.backbone.channels = 8;
        cfg.backbone.bottleneck = 4;
        cfg.backbone.hyper_channels = 4;
        let model = RfdModel::new(cfg, 3).unwrap();
        let images: Vec<(String, Image)> =
            underwater_set(2, 2, 0, 24, 40).unwrap().into_iter().enumerate().map(|(i, im)| (format!("{i}.png"), im)).collect();
        let out = run_eval(std::slice::from_ref(&model), None, &images, &Ablation::default(), "base").unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.curve.points.len(), 1);
        for r in &out.rows {
            assert_eq!(r.bpp, (r.bits_z + r.bits_w + r.bits_index) as f64 / (24.0 * 40.0));
        }
        let dir = tempfile::tempdir().unwrap();
        write_rows(&out.rows, dir.path().join("rows.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
        assert!(text.starts_with("image,lambda,bpp,psnr,bits_z,bits_W,bits_index,file_bytes"));
        // two models with equal mean rate cannot form a curve
        let twice = [model.clone(), model];
        assert!(matches!(run_eval(&twice, None, &images, &Ablation::default(), "dup"), Err(Error::Domain(_))));
    }
}
