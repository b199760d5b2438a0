//! Stratified choice of representative images on the (SI, CF) plane.

use super::metrics::{compute_cf, compute_si};
use crate::error::{Error, Result};
use crate::image::Image;

/// Grid cell of every image plus the chosen indices.
#[derive(Clone, Debug)]
pub struct Selection {
    pub chosen: Vec<usize>,
    pub cells: Vec<(usize, usize)>,
    pub rows: usize,
    pub cols: usize,
}

impl Selection {
    pub fn occupied_cells(&self) -> usize {
        let mut c = self.cells.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    }
}

/// `bins - 1` interior edges at the equal-frequency quantiles of `values`.
fn quantile_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (1..bins).map(|j| v[j * v.len() / bins]).collect()
}

fn bin_of(x: f64, edges: &[f64]) -> usize {
    edges.iter().filter(|&&e| x >= e).count()
}

/// Bins the corpus on an equal-frequency `rows x cols` grid (`rows = floor(sqrt(groups))`,
/// `cols = groups / rows`) and keeps the `per_cell` highest-SI images of every occupied cell.
/// More groups than images are reduced to the corpus size.
pub fn select_representatives(corpus: &[Image], groups: usize, per_cell: usize) -> Result<Selection> {
    let si: Vec<f64> = corpus.iter().map(compute_si).collect();
    let cf: Vec<f64> = corpus.iter().map(compute_cf).collect();
    select_by_metrics(&si, &cf, groups, per_cell)
}

pub fn select_by_metrics(si: &[f64], cf: &[f64], groups: usize, per_cell: usize) -> Result<Selection> {
    let n = si.len();
    if n == 0 {
        return Err(Error::Configuration("cannot select from an empty corpus".into()));
    }
    if groups == 0 || per_cell == 0 {
        return Err(Error::Configuration("groups and images per group must be positive".into()));
    }
    let groups = if groups > n {
        log::warn!("{groups} groups requested for {n} images; using {n}");
        n
    } else {
        groups
    };
    let rows = (groups as f64).sqrt().floor() as usize;
    let cols = groups / rows;
    let si_edges = quantile_edges(si, rows);
    let cf_edges = quantile_edges(cf, cols);
    let cells: Vec<(usize, usize)> = (0..n).map(|i| (bin_of(si[i], &si_edges), bin_of(cf[i], &cf_edges))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // cell, then SI descending, then index
    order.sort_by(|&a, &b| cells[a].cmp(&cells[b]).then(si[b].total_cmp(&si[a])).then(a.cmp(&b)));
    let mut chosen = Vec::new();
    let mut taken = 0;
    for (k, &i) in order.iter().enumerate() {
        if k > 0 && cells[order[k - 1]] != cells[i] {
            taken = 0;
        }
        if taken < per_cell {
            chosen.push(i);
            taken += 1;
        }
    }
    chosen.sort_unstable();
    Ok(Selection { chosen, cells, rows, cols })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_identical_corpora() {
        let img = Image::from_fn(8, 8, |c, y, x| ((c + x * y) % 5) as f64 / 5.0).unwrap();
        let s = select_representatives(std::slice::from_ref(&img), 300, 1).unwrap();
        assert_eq!(s.chosen, vec![0]);
        let same = vec![img.clone(); 6];
        let s = select_representatives(&same, 4, 1).unwrap();
        assert_eq!(s.occupied_cells(), 1);
        assert_eq!(s.chosen.len(), 1);
        let s2 = select_representatives(&same, 4, 2).unwrap();
        assert_eq!(s2.chosen.len(), 2);
    }

    #[test]
    fn every_occupied_cell_is_represented() {
        let si: Vec<f64> = (0..60).map(|i| (i % 3) as f64 * 10.0 + (i as f64 * 0.37).sin()).collect();
        let cf: Vec<f64> = (0..60).map(|i| (i % 3) as f64 * 5.0 + (i as f64 * 0.91).cos()).collect();
        let s = select_by_metrics(&si, &cf, 9, 1).unwrap();
        let covered: std::collections::BTreeSet<_> = s.chosen.iter().map(|&i| s.cells[i]).collect();
        assert_eq!(covered.len(), s.occupied_cells());
        assert!(select_by_metrics(&[], &[], 3, 1).is_err());
    }
}
