//! Procedural underwater-styled images with known physical priors.
//!
//! Scenes are built from a small catalogue of layouts ("kinds"): a seabed
//! gradient, textured bands and a handful of coloured ellipses with dark
//! shadows. The same kind rendered with different variation seeds gives
//! images sharing structure, which is what a feature dictionary can exploit.
//! Water styles draw attenuation, a depth ramp and a blue/green ambient light.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::{Image, Planes};
use crate::physical::{degrade, DepthMap, UnderwaterPriors};

struct Blob {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    color: [f64; 3],
}

fn rng(a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b)
}

/// Clear scene of layout `kind`, perturbed by `variation`.
pub fn clear_scene(kind: u64, variation: u64, height: usize, width: usize) -> Image {
    let mut layout = rng(kind, 1);
    let mut jitter = rng(kind, 1000 + variation);
    let (h, w) = (height as f64, width as f64);

    let sand = [
        layout.random_range(0.45..0.75),
        layout.random_range(0.40..0.65),
        layout.random_range(0.25..0.45),
    ];
    let freq = layout.random_range(2.0..6.0);
    let angle: f64 = layout.random_range(0.0..std::f64::consts::PI);
    let n_blobs = layout.random_range(3..7);
    let shift_y = jitter.random_range(-0.03..0.03) * h;
    let shift_x = jitter.random_range(-0.03..0.03) * w;
    let gain = jitter.random_range(0.9..1.1);
    let blobs: Vec<Blob> = (0..n_blobs)
        .map(|_| Blob {
            cy: layout.random_range(0.1..0.9) * h + shift_y,
            cx: layout.random_range(0.1..0.9) * w + shift_x,
            ry: layout.random_range(0.06..0.22) * h,
            rx: layout.random_range(0.06..0.22) * w,
            color: [
                layout.random_range(0.0..1.0),
                layout.random_range(0.0..0.8),
                layout.random_range(0.0..0.6),
            ],
        })
        .collect();
    let noise_seed: u64 = jitter.random();

    Planes::from_fn(height, width, |c, y, x| {
        let (fy, fx) = (y as f64 / h, x as f64 / w);
        let ripple = 0.5 + 0.5 * (std::f64::consts::TAU * freq * (fy * angle.cos() + fx * angle.sin())).sin();
        let mut v = sand[c] * (0.55 + 0.45 * fy) * (0.75 + 0.25 * ripple);
        for b in &blobs {
            let dy = (y as f64 - b.cy) / b.ry;
            let dx = (x as f64 - b.cx) / b.rx;
            let r2 = dy * dy + dx * dx;
            // shadow ring just outside the body keeps dark pixels in most windows
            if r2 < 1.0 {
                v = b.color[c] * (0.7 + 0.3 * (1.0 - r2));
            } else if r2 < 1.6 && dy > 0.0 {
                v *= 0.25;
            }
        }
        let hash = (noise_seed ^ ((c * 7919 + y * 104_729 + x * 1_299_709) as u64)).wrapping_mul(0x2545_F491_4F6C_DD1D);
        let grain = ((hash >> 40) as f64 / (1u64 << 24) as f64 - 0.5) * 0.02;
        (v * gain + grain).clamp(0.0, 1.0)
    })
    .try_into()
    .expect("clamped scene is a valid image")
}

/// Water style parameters for one capture.
#[derive(Clone, Debug, PartialEq)]
pub struct WaterStyle {
    pub alpha: [f64; 3],
    pub ambient: [f64; 3],
    pub near: f64,
    pub far: f64,
}

impl WaterStyle {
    pub fn random(seed: u64) -> Self {
        let mut r = rng(seed, 77);
        WaterStyle {
            alpha: [r.random_range(0.35..0.8), r.random_range(0.1..0.3), r.random_range(0.05..0.2)],
            ambient: [r.random_range(0.05..0.3), r.random_range(0.45..0.8), r.random_range(0.55..0.9)],
            near: r.random_range(0.5..2.0),
            far: r.random_range(3.0..7.0),
        }
    }

    /// Depth grows linearly from `near` at the bottom row to `far` at the top row.
    pub fn priors(&self, height: usize, width: usize) -> Result<UnderwaterPriors> {
        let data = (0..height)
            .flat_map(|y| {
                let t = if height > 1 { y as f64 / (height - 1) as f64 } else { 0.0 };
                std::iter::repeat_n(self.far + (self.near - self.far) * t, width)
            })
            .collect();
        UnderwaterPriors::from_depth(self.alpha, DepthMap::new(height, width, data)?, self.ambient)
    }
}

/// A synthetic capture together with its ground truth.
#[derive(Clone, Debug)]
pub struct Sample {
    pub clear: Image,
    pub priors: UnderwaterPriors,
    pub captured: Image,
}

pub fn underwater_sample(kind: u64, variation: u64, style_seed: u64, height: usize, width: usize) -> Result<Sample> {
    let clear = clear_scene(kind, variation, height, width);
    let priors = WaterStyle::random(style_seed).priors(height, width)?;
    let captured = degrade(&clear, &priors)?;
    Ok(Sample { clear, priors, captured })
}

/// `count` captures cycling over `kinds` layouts with distinct variations and styles.
pub fn underwater_set(kinds: u64, count: usize, seed: u64, height: usize, width: usize) -> Result<Vec<Image>> {
    (0..count)
        .map(|i| {
            let i = i as u64;
            underwater_sample(i % kinds, seed * 1000 + i, seed * 7919 + i, height, width).map(|s| s.captured)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = underwater_sample(3, 1, 2, 32, 48).unwrap();
        let b = underwater_sample(3, 1, 2, 32, 48).unwrap();
        assert_eq!(a.captured, b.captured);
        assert_eq!((a.captured.height(), a.captured.width()), (32, 48));
        let other = underwater_sample(4, 1, 2, 32, 48).unwrap();
        assert_ne!(a.captured, other.captured);
    }

    #[test]
    fn same_kind_is_closer_than_other_kind() {
        let base = clear_scene(1, 0, 64, 64);
        let same = clear_scene(1, 5, 64, 64);
        let other = clear_scene(2, 0, 64, 64);
        let d = |a: &Image, b: &Image| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        assert!(d(&base, &same) < d(&base, &other));
    }
}
