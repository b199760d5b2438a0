//! Per-image PCA reduction followed by k-means.
//!
//! Each source image gets its own PCA (Gram-matrix form, since images
//! contribute few vectors of high dimension). Every vector is replaced by its
//! rank-`pca_dims` reconstruction around its image mean. Those
//! reconstructions live in the span of all image means and bases, which is
//! orthonormalised once; k-means runs on coordinates in that shared basis and
//! centroids map back by the same basis.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub pca_dims: usize,
    pub max_iter: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { k: 128, pca_dims: 64, max_iter: 100, tolerance: 1e-4, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct ClusterOutput {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster of every input vector.
    pub assignments: Vec<usize>,
    /// Objective after each assignment step.
    pub objective: Vec<f64>,
    pub shared_dims: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct ImagePca {
    mean: Vec<f64>,
    basis: Vec<Vec<f64>>,
}

fn fit_pca(rows: &[&[f64]], dims: usize) -> ImagePca {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v / n as f64;
        }
    }
    if n < 2 || dims == 0 {
        return ImagePca { mean, basis: Vec::new() };
    }
    let centred: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect()).collect();
    let gram = DMatrix::from_fn(n, n, |i, j| dot(&centred[i], &centred[j]));
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut basis = Vec::new();
    for &j in order.iter().take(dims) {
        let lambda = eig.eigenvalues[j];
        if lambda <= 1e-12 * top.max(f64::MIN_POSITIVE) || lambda <= 0.0 {
            break;
        }
        let mut b = vec![0.0; d];
        for (i, row) in centred.iter().enumerate() {
            let u = eig.eigenvectors[(i, j)];
            for (bk, v) in b.iter_mut().zip(row) {
                *bk += u * v;
            }
        }
        let s = lambda.sqrt();
        b.iter_mut().for_each(|v| *v /= s);
        basis.push(b);
    }
    ImagePca { mean, basis }
}

/// Modified Gram-Schmidt; vectors whose residual falls below `1e-10` of their norm are dropped.
fn orthonormalise(candidates: impl Iterator<Item = Vec<f64>>) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    for mut v in candidates {
        let norm0 = dot(&v, &v).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &q {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-10 * norm0 {
            v.iter_mut().for_each(|x| *x /= norm);
            q.push(v);
        }
    }
    q
}

/// Clusters `vectors` (grouped by `image_ids`) into at most `k` centroids.
pub fn reduce_and_cluster(vectors: &[Vec<f64>], image_ids: &[usize], cfg: &KMeansConfig) -> Result<ClusterOutput> {
    if cfg.k == 0 {
        return Err(Error::Domain("k must be positive".into()));
    }
    if vectors.is_empty() {
        return Err(Error::Configuration("no feature vectors to cluster".into()));
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) || image_ids.len() != vectors.len() {
        return Err(Error::Dimension("feature vectors must share one length and have one image id each".into()));
    }
    if cfg.pca_dims > d {
        return Err(Error::Domain(format!("pca_dims {} exceeds vector length {d}", cfg.pca_dims)));
    }
    let n = vectors.len();
    if n <= cfg.k {
        return Ok(ClusterOutput { centroids: vectors.to_vec(), assignments: (0..n).collect(), objective: Vec::new(), shared_dims: d });
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &id) in image_ids.iter().enumerate() {
        groups.entry(id).or_default().push(i);
    }
    let mut pca_of = vec![0usize; n];
    let mut fits = Vec::with_capacity(groups.len());
    for members in groups.values() {
        let rows: Vec<&[f64]> = members.iter().map(|&i| vectors[i].as_slice()).collect();
        for &i in members {
            pca_of[i] = fits.len();
        }
        fits.push(fit_pca(&rows, cfg.pca_dims));
    }
    let shared = orthonormalise(fits.iter().flat_map(|f| std::iter::once(f.mean.clone()).chain(f.basis.iter().cloned())));

    let coords: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let f = &fits[pca_of[i]];
            let mut recon = f.mean.clone();
            let centred: Vec<f64> = vectors[i].iter().zip(&f.mean).map(|(v, m)| v - m).collect();
            for b in &f.basis {
                let c = dot(&centred, b);
                recon.iter_mut().zip(b).for_each(|(r, bv)| *r += c * bv);
            }
            shared.iter().map(|q| dot(&recon, q)).collect()
        })
        .collect();

    let (centres, assignments, objective) = kmeans(&coords, cfg.k, cfg.max_iter, cfg.tolerance, cfg.seed);
    let centroids = centres
        .iter()
        .map(|c| {
            let mut v = vec![0.0; d];
            for (ci, q) in c.iter().zip(&shared) {
                v.iter_mut().zip(q).for_each(|(x, qv)| *x += ci * qv);
            }
            v
        })
        .collect();
    Ok(ClusterOutput { centroids, assignments, objective, shared_dims: shared.len() })
}

fn nearest(x: &[f64], centres: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centres.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding then Lloyd iterations. Empty clusters keep their centre.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iter: usize, tolerance: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centres = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if t < w {
                    idx = i;
                    break;
                }
                t -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centres.push(points[pick].clone());
        let c = centres.last().unwrap();
        for (dv, p) in d2.iter_mut().zip(points) {
            *dv = dv.min(sq_dist(p, c));
        }
    }

    let dim = points[0].len();
    let mut assignments = vec![0; n];
    let mut trace: Vec<f64> = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut objective = 0.0;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (j, d) = nearest(p, &centres);
            *a = j;
            objective += d;
        }
        let converged = trace.last().is_some_and(|&prev| prev - objective <= tolerance * prev);
        trace.push(objective);
        if converged {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centres[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    (centres, assignments, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr_free::gaussian;

    /// Box-Muller normals without an extra dependency.
    mod rand_distr_free {
        use rand::Rng;
        pub fn gaussian(rng: &mut impl Rng) -> f64 {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            let v: f64 = rng.random();
            (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        }
    }

    fn blobs(n: usize) -> (Vec<Vec<f64>>, [Vec<f64>; 2]) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let means = [vec![0.0, 0.0, 0.0, 0.0], vec![5.0, -3.0, 4.0, 2.0]];
        let pts = (0..n).map(|i| means[i % 2].iter().map(|m| m + 0.1 * gaussian(&mut rng)).collect()).collect();
        (pts, means)
    }

    /// Plain Lloyd from the two extreme points, run to a fixed point.
    fn brute_force_lloyd(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut c = vec![points[0].clone(), points[1].clone()];
        loop {
            let mut sums = vec![vec![0.0; 4]; 2];
            let mut counts = [0.0; 2];
            for p in points {
                let j = if sq_dist(p, &c[0]) <= sq_dist(p, &c[1]) { 0 } else { 1 };
                counts[j] += 1.0;
                sums[j].iter_mut().zip(p).for_each(|(s, v)| *s += v);
            }
            let next: Vec<Vec<f64>> = (0..2).map(|j| sums[j].iter().map(|s| s / counts[j]).collect()).collect();
            if next == c {
                return c;
            }
            c = next;
        }
    }

    #[test]
    fn two_blobs() {
        let (pts, means) = blobs(200);
        let ids: Vec<usize> = (0..pts.len()).collect();
        let cfg = KMeansConfig { k: 2, pca_dims: 2, ..KMeansConfig::default() };
        let out = reduce_and_cluster(&pts, &ids, &cfg).unwrap();
        let oracle = brute_force_lloyd(&pts);
        for m in &means {
            let best = out.centroids.iter().map(|c| sq_dist(c, m).sqrt()).fold(f64::INFINITY, f64::min);
            assert!(best < 0.1, "centroid {best} from true mean");
            let ob = oracle.iter().map(|c| sq_dist(c, m).sqrt()).fold(f64::INFINITY, f64::min);
            assert!(ob < 0.1);
        }
        assert!(out.objective.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn single_cluster_is_the_mean_of_reductions() {
        let (pts, _) = blobs(20);
        // four vectors per image, reduced to rank 1 around each image mean
        let ids: Vec<usize> = (0..20).map(|i| i / 4).collect();
        let cfg = KMeansConfig { k: 1, pca_dims: 1, ..KMeansConfig::default() };
        let out = reduce_and_cluster(&pts, &ids, &cfg).unwrap();
        let mut expected = vec![0.0; 4];
        for g in 0..5 {
            let rows: Vec<&[f64]> = (0..4).map(|j| pts[g * 4 + j].as_slice()).collect();
            let f = fit_pca(&rows, 1);
            for r in &rows {
                let c: Vec<f64> = r.iter().zip(&f.mean).map(|(v, m)| v - m).collect();
                let coef = dot(&c, &f.basis[0]);
                for k in 0..4 {
                    expected[k] += (f.mean[k] + coef * f.basis[0][k]) / 20.0;
                }
            }
        }
        assert!(sq_dist(&out.centroids[0], &expected).sqrt() < 1e-5);
    }

    #[test]
    fn few_inputs_are_returned_unchanged() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let out = reduce_and_cluster(&pts, &[0, 0, 1], &KMeansConfig { k: 5, pca_dims: 1, ..KMeansConfig::default() }).unwrap();
        assert_eq!(out.centroids, pts);
        assert!(reduce_and_cluster(&pts, &[0, 0, 1], &KMeansConfig { k: 0, pca_dims: 1, ..KMeansConfig::default() }).is_err());
    }

    #[test]
    fn deterministic() {
        let (pts, _) = blobs(60);
        let ids: Vec<usize> = (0..60).map(|i| i / 3).collect();
        let cfg = KMeansConfig { k: 4, pca_dims: 2, ..KMeansConfig::default() };
        let a = reduce_and_cluster(&pts, &ids, &cfg).unwrap();
        let b = reduce_and_cluster(&pts, &ids, &cfg).unwrap();
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.objective, b.objective);
    }
}
