//! Global normalised inner-product matching of features against dictionary entries.

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Scores `<F, E_i / |E_i|>` of every entry; zero-norm entries score `-inf`.
/// Entries smaller than `F` are tiled periodically to its spatial size.
pub fn match_scores(features: &Tensor, entries: &[Tensor]) -> Result<Vec<f64>> {
    let (c, h, w) = features.chw();
    entries
        .iter()
        .map(|e| {
            if e.chw().0 != c {
                return Err(Error::Dimension(format!("entry has {} channels, features {c}", e.chw().0)));
            }
            let e = e.tile_to(h, w);
            let norm = e.norm();
            Ok(if norm > 0.0 { features.dot(&e) / norm } else { f64::NEG_INFINITY })
        })
        .collect()
}

/// Best entry and its score; ties go to the lowest index.
pub fn feature_match(features: &Tensor, entries: &[Tensor]) -> Result<(usize, f64)> {
    if entries.is_empty() {
        return Err(Error::Configuration("cannot match against an empty dictionary".into()));
    }
    let scores = match_scores(features, entries)?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    Ok((best, scores[best]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn planted_and_orthogonal() {
        let f = Tensor::new(vec![2, 2, 2], vec![1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 3.0, 1.0]).unwrap();
        let unit = f.map(|v| v / f.norm());
        // orthogonal to f: swap pairs with a sign flip
        let d = f.data();
        let orth = Tensor::new(vec![2, 2, 2], vec![-d[1], d[0], -d[3], d[2], -d[5], d[4], -d[7], d[6]]).unwrap();
        assert!(orth.dot(&f).abs() < 1e-12);
        let (i, s) = feature_match(&f, &[unit.clone(), orth]).unwrap();
        assert_eq!(i, 0);
        assert!((s - f.norm()).abs() < 1e-12);
        assert_eq!(feature_match(&f, &[unit.clone(), unit]).unwrap().0, 0);
        assert!(feature_match(&f, &[]).is_err());
        let zero = Tensor::zeros(&[2, 2, 2]);
        assert_eq!(feature_match(&f, &[zero, f.map(|v| -v)]).unwrap().0, 1);
    }

    proptest! {
        #[test]
        fn argmax_ignores_positive_scaling(seed in 0u64..10_000, c in 0.01f64..100.0) {
            let f = Tensor::from_fn(&[2, 3, 3], |i| (((i as u64 + 1) * (seed + 17) * 2654435761) % 1000) as f64 / 500.0 - 1.0);
            let entries: Vec<Tensor> = (0..8)
                .map(|k| Tensor::from_fn(&[2, 3, 3], |i| ((((i + 31 * k) as u64 + 3) * (seed + 5) * 40503) % 997) as f64 / 498.5 - 1.0))
                .collect();
            let scaled = f.map(|v| v * c);
            prop_assert_eq!(feature_match(&f, &entries).unwrap().0, feature_match(&scaled, &entries).unwrap().0);
        }
    }
}
