//! Spatial information and colourfulness indices.

use crate::image::Image;

/// Population standard deviation.
fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Standard deviation of the Sobel gradient magnitude of the luma plane,
/// over the interior where the 3x3 kernel fits.
pub fn compute_si(image: &Image) -> f64 {
    let (h, w) = (image.height(), image.width());
    if h < 3 || w < 3 {
        return 0.0;
    }
    let y = image.luma();
    let at = |r: usize, c: usize| y[r * w + c];
    let mut mags = Vec::with_capacity((h - 2) * (w - 2));
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            mags.push((gx * gx + gy * gy).sqrt());
        }
    }
    std_dev(&mags)
}

/// Hasler-Suesstrunk colourfulness on `rg = R - G`, `yb = (R + G) / 2 - B`.
pub fn compute_cf(image: &Image) -> f64 {
    let p = image.planes();
    let (r, g, b) = (p.plane(0), p.plane(1), p.plane(2));
    let rg: Vec<f64> = r.iter().zip(g).map(|(r, g)| r - g).collect();
    let yb: Vec<f64> = r.iter().zip(g).zip(b).map(|((r, g), b)| 0.5 * (r + g) - b).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (srg, syb) = (std_dev(&rg), std_dev(&yb));
    let (mrg, myb) = (mean(&rg), mean(&yb));
    (srg * srg + syb * syb).sqrt() + 0.3 * (mrg * mrg + myb * myb).sqrt()
}

/// Nearest-rank percentile of `values` (`q` in `[0, 100]`).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * (v.len() - 1) as f64).round() as usize;
    v[rank.min(v.len() - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn si_of_step_edge_matches_hand_convolution() {
        // 8x8, left half 0, right half 1: on the 6x6 interior, columns 3 and 4
        // have |gx| = 4, everything else is flat. 12 of 36 values are 4.
        let img = Image::from_fn(8, 8, |_, _, x| if x >= 4 { 1.0 } else { 0.0 }).unwrap();
        let expected = (32.0f64).sqrt() / 3.0;
        assert!((compute_si(&img) - expected).abs() < 1e-12);
        assert!((compute_si(&img.transpose()) - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_and_gray_images() {
        let c = Image::filled(10, 12, [0.3, 0.6, 0.2]).unwrap();
        assert_eq!(compute_si(&c), 0.0);
        let gray = Image::from_fn(9, 9, |_, y, x| ((x * y) % 7) as f64 / 7.0).unwrap();
        assert_eq!(compute_cf(&gray), 0.0);
        let red = Image::filled(4, 4, [1.0, 0.0, 0.0]).unwrap();
        assert!((compute_cf(&red) - 0.3 * 1.25f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn cf_is_position_free(seed in 0u64..1000) {
            let img = Image::from_fn(6, 7, |c, y, x| (((seed as usize + 31 * c + 7 * y + 3 * x) * 2654435761) % 1000) as f64 / 1000.0).unwrap();
            let flipped = img.flip_horizontal();
            prop_assert!((compute_cf(&img) - compute_cf(&flipped)).abs() < 1e-12);
            prop_assert!((compute_cf(&img) - compute_cf(&img.transpose())).abs() < 1e-12);
            prop_assert!(compute_si(&img) >= 0.0 && compute_cf(&img) >= 0.0);
        }
    }
}
