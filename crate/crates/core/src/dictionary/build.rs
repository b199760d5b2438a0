//! Corpus to dictionary: select, crop, extract, reduce, cluster.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::cluster::{reduce_and_cluster, KMeansConfig};
use super::io::{DictScale, EntryPriors, FeatureDictionary};
use super::metrics::{compute_cf, compute_si, percentile};
use super::patches::{crop_patches, PatchSet, SourceId};
use super::select::select_representatives;
use crate::codec::Backbone;
use crate::error::{Error, Result};
use crate::image::{Image, Planes};
use crate::nn::Tensor;
use crate::physical::estimate_priors;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub groups: usize,
    pub per_cell: usize,
    pub scales: Vec<usize>,
    pub patch_size: usize,
    pub kmeans: KMeansConfig,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig { groups: 300, per_cell: 1, scales: vec![2, 3, 4], patch_size: 128, kmeans: KMeansConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiversityRow {
    pub image_id: usize,
    pub patch_row: usize,
    pub patch_col: usize,
    pub si: f64,
    pub cf: f64,
}

#[derive(Clone, Debug, Default)]
pub struct DiversityReport {
    pub rows: Vec<DiversityRow>,
}

impl DiversityReport {
    pub fn from_patches(set: &PatchSet) -> Self {
        let rows = set
            .patches
            .iter()
            .zip(&set.sources)
            .map(|(p, s)| DiversityRow { image_id: s.image, patch_row: s.row, patch_col: s.col, si: compute_si(p), cf: compute_cf(p) })
            .collect();
        DiversityReport { rows }
    }

    /// 10th, 50th and 90th percentiles of SI and CF.
    pub fn summary(&self) -> serde_json::Value {
        let si: Vec<f64> = self.rows.iter().map(|r| r.si).collect();
        let cf: Vec<f64> = self.rows.iter().map(|r| r.cf).collect();
        let pct = |v: &[f64]| json!({"p10": percentile(v, 10.0), "p50": percentile(v, 50.0), "p90": percentile(v, 90.0)});
        json!({"patches": self.rows.len(), "si": pct(&si), "cf": pct(&cf)})
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Format(format!("writing {}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

pub struct BuildOutput {
    pub dictionary: FeatureDictionary,
    pub report: DiversityReport,
    pub chosen: Vec<usize>,
    /// k-means objective per Lloyd iteration, per scale.
    pub objectives: Vec<(usize, Vec<f64>)>,
}

/// PNG files of a directory in lexicographic order.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<Image>> {
    let paths = list_images(&dir)?;
    if paths.is_empty() {
        return Err(Error::Configuration(format!("no PNG images in {}", dir.as_ref().display())));
    }
    paths.iter().map(Image::load).collect()
}

/// Pooled entry priors at the grid of `scale`.
fn pooled_priors(patch: &Image, scale: usize) -> EntryPriors {
    let p = estimate_priors(patch);
    EntryPriors { ambient: p.ambient, transmission: p.transmission.avg_pool(1 << scale) }
}

fn mean_priors(members: &[&EntryPriors]) -> EntryPriors {
    let n = members.len() as f64;
    let first = &members[0].transmission;
    let mut ambient = [0.0; 3];
    let mut t = vec![0.0; first.data.len()];
    for m in members {
        for c in 0..3 {
            ambient[c] += m.ambient[c] / n;
        }
        t.iter_mut().zip(&m.transmission.data).for_each(|(a, b)| *a += b / n);
    }
    EntryPriors { ambient, transmission: Planes { height: first.height, width: first.width, data: t } }
}

pub fn build_dictionary(corpus: &[Image], backbone: &Backbone, cfg: &BuildConfig) -> Result<BuildOutput> {
    if cfg.scales.is_empty() || cfg.scales.iter().any(|s| !(2..=4).contains(s)) {
        return Err(Error::Configuration(format!("dictionary scales {:?} must lie in 2..=4", cfg.scales)));
    }
    let selection = select_representatives(corpus, cfg.groups, cfg.per_cell)?;
    let mut patches = PatchSet::default();
    for &i in &selection.chosen {
        match crop_patches(&corpus[i], cfg.patch_size, i) {
            Ok(set) => patches.extend(set),
            Err(Error::TooSmall { height, width, .. }) => log::warn!("skipping image {i} ({height}x{width})"),
            Err(e) => return Err(e),
        }
    }
    if patches.is_empty() {
        return Err(Error::Configuration(format!("no selected image is at least {0}x{0}", cfg.patch_size)));
    }
    let report = DiversityReport::from_patches(&patches);

    let features: Vec<Vec<Tensor>> = patches.patches.iter().map(|p| backbone.features(p)).collect::<Result<_>>()?;
    let image_ids: Vec<usize> = patches.sources.iter().map(|s: &SourceId| s.image).collect();

    let mut scales = Vec::new();
    let mut objectives = Vec::new();
    let mut per_scale_meta = serde_json::Map::new();
    for &s in &cfg.scales {
        let shape = features[0][s - 1].shape().to_vec();
        let vectors: Vec<Vec<f64>> = features.iter().map(|f| f[s - 1].data().to_vec()).collect();
        let priors: Vec<EntryPriors> = patches.patches.iter().map(|p| pooled_priors(p, s)).collect();
        let dim = vectors[0].len();
        let km = KMeansConfig { pca_dims: cfg.kmeans.pca_dims.min(dim), ..cfg.kmeans.clone() };
        let out = reduce_and_cluster(&vectors, &image_ids, &km)?;
        let mut entry_priors = Vec::with_capacity(out.centroids.len());
        for j in 0..out.centroids.len() {
            let members: Vec<&EntryPriors> = out.assignments.iter().zip(&priors).filter(|(a, _)| **a == j).map(|(_, p)| p).collect();
            let members = if members.is_empty() { priors.iter().collect() } else { members };
            entry_priors.push(mean_priors(&members));
        }
        let entries = out.centroids.into_iter().map(|c| Tensor::new(shape.clone(), c)).collect::<Result<Vec<_>>>()?;
        per_scale_meta.insert(
            s.to_string(),
            json!({"shared_dims": out.shared_dims, "pca_dims": km.pca_dims, "objective": out.objective}),
        );
        objectives.push((s, out.objective));
        scales.push(DictScale { scale: s, entries, priors: entry_priors });
    }
    let metadata = json!({
        "seed": cfg.kmeans.seed,
        "groups": cfg.groups,
        "selected_images": selection.chosen,
        "patches": patches.sources.iter().map(|s| [s.image, s.row, s.col]).collect::<Vec<_>>(),
        "clustering": per_scale_meta,
        "diversity": report.summary(),
    });
    let channels = features[0][0].shape()[0];
    let dictionary = FeatureDictionary::new(channels, cfg.patch_size, backbone.fingerprint, scales, metadata)?;
    Ok(BuildOutput { dictionary, report, chosen: selection.chosen, objectives })
}

/// Writes the dictionary and the diversity CSV.
pub fn build_to_files(corpus: &[Image], backbone: &Backbone, cfg: &BuildConfig, out: &Path, report: Option<&Path>) -> Result<BuildOutput> {
    let built = build_dictionary(corpus, backbone, cfg)?;
    let bytes = built.dictionary.to_bytes();
    let mut f = std::fs::File::create(out).map_err(|e| Error::io(out, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(out, e))?;
    if let Some(path) = report {
        built.report.write_csv(path)?;
    }
    Ok(built)
}
