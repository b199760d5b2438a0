use rand::Rng;

use crate::nn::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantMode {
    /// Additive `Uniform[-0.5, 0.5)` noise.
    Train,
    /// Round half away from zero.
    Infer,
}

/// `f64::round` already rounds half away from zero; named for the call sites.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

pub fn quantize_value(x: f64, mode: QuantMode, rng: &mut impl Rng) -> f64 {
    match mode {
        QuantMode::Infer => round_half_away(x),
        QuantMode::Train => x + rng.random_range(-0.5..0.5),
    }
}

pub fn quantize(x: &Tensor, mode: QuantMode, rng: &mut impl Rng) -> Tensor {
    match mode {
        QuantMode::Infer => x.map(round_half_away),
        QuantMode::Train => {
            let mut out = x.clone();
            for v in out.data_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
            out
        }
    }
}

/// Noise tensor matching `shape`, used to build `x + u` inside a graph.
pub fn uniform_noise(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-0.5..0.5))
}

/// Rounded tensor as integer symbols.
pub fn to_symbols(x: &Tensor) -> Vec<i64> {
    x.data().iter().map(|&v| round_half_away(v) as i64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rounding_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut q = |x| quantize_value(x, QuantMode::Infer, &mut rng);
        assert_eq!(q(0.4), 0.0);
        assert_eq!(q(0.6), 1.0);
        assert_eq!(q(-1.5), -2.0);
        assert_eq!(q(1.5), 2.0);
        assert_eq!(q(-3.0), -3.0);
    }

    #[test]
    fn training_noise_is_bounded_and_centred() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::full(&[100_000], 2.25);
        let y = quantize(&x, QuantMode::Train, &mut rng);
        let offsets: Vec<f64> = y.data().iter().map(|v| v - 2.25).collect();
        assert!(offsets.iter().all(|d| d.abs() <= 0.5));
        let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
        assert!(mean.abs() < 0.01, "mean offset {mean}");
    }

    proptest! {
        #[test]
        fn infer_is_idempotent(x in -1e6f64..1e6) {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let once = quantize_value(x, QuantMode::Infer, &mut rng);
            prop_assert_eq!(quantize_value(once, QuantMode::Infer, &mut rng), once);
            prop_assert!((once - x).abs() <= 0.5);
        }
    }
}
