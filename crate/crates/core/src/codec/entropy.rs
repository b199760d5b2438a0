//! Range coding of integer symbols under per-element Gaussian mixtures.
//!
//! Each symbol is coded against a window `[lo, hi]` covering the mixture's
//! bulk plus one escape slot. Values outside the window are sent as the
//! escape symbol, a side bit and an Elias-gamma distance.

use super::gmm::GmmParams;
use super::range_coder::{decode_gamma, encode_gamma, FreqTable, RangeDecoder, RangeEncoder};
use crate::error::Result;

/// Widest window; larger mixtures are centred on the heaviest component.
const MAX_WINDOW: i64 = 4096;

struct Window {
    lo: i64,
    table: FreqTable,
}

fn window(params: &GmmParams) -> Window {
    let (mut lo, mut hi) = params.support();
    if hi - lo + 1 > MAX_WINDOW {
        let j = (0..params.components())
            .max_by(|&a, &b| params.weights()[a].total_cmp(&params.weights()[b]))
            .unwrap();
        let c = params.means()[j].round() as i64;
        lo = c - MAX_WINDOW / 2;
        hi = lo + MAX_WINDOW - 1;
    }
    let n = (hi - lo + 1) as usize;
    let mut probs = Vec::with_capacity(n + 1);
    let mut inside = 0.0;
    for v in lo..=hi {
        let p = params.mass(v as f64 - 0.5, v as f64 + 0.5);
        inside += p;
        probs.push(p);
    }
    probs.push((1.0 - inside).max(0.0));
    Window { lo, table: FreqTable::from_probs(&probs) }
}

pub fn encode_symbol(enc: &mut RangeEncoder, v: i64, params: &GmmParams) {
    let w = window(params);
    let escape = w.table.len() - 1;
    let hi = w.lo + escape as i64 - 1;
    if (w.lo..=hi).contains(&v) {
        w.table.encode(enc, (v - w.lo) as usize);
    } else {
        w.table.encode(enc, escape);
        let above = v > hi;
        enc.encode_bit(above);
        encode_gamma(enc, if above { (v - hi) as u64 } else { (w.lo - v) as u64 });
    }
}

pub fn decode_symbol(dec: &mut RangeDecoder, params: &GmmParams) -> Result<i64> {
    let w = window(params);
    let escape = w.table.len() - 1;
    let s = w.table.decode(dec)?;
    if s < escape {
        return Ok(w.lo + s as i64);
    }
    let hi = w.lo + escape as i64 - 1;
    let above = dec.decode_bit();
    let d = decode_gamma(dec)? as i64;
    Ok(if above { hi + d } else { w.lo - d })
}

/// Codes `symbols[i]` under `params(i)`; returns the finished stream.
pub fn encode_all(symbols: &[i64], params: impl Fn(usize) -> GmmParams) -> Vec<u8> {
    let mut enc = RangeEncoder::new();
    for (i, &v) in symbols.iter().enumerate() {
        encode_symbol(&mut enc, v, &params(i));
    }
    enc.finish()
}

pub fn decode_all(bytes: &[u8], n: usize, params: impl Fn(usize) -> GmmParams) -> Result<Vec<i64>> {
    let mut dec = RangeDecoder::new(bytes);
    (0..n).map(|i| decode_symbol(&mut dec, &params(i))).collect()
}

/// Cross-entropy `sum -log2 P(v)` of a stream under the (floored) model.
pub fn model_bits(symbols: &[i64], params: impl Fn(usize) -> GmmParams) -> f64 {
    symbols
        .iter()
        .enumerate()
        .map(|(i, &v)| -super::gmm::gmm_likelihood(v as f64, &params(i)).log2())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng) -> GmmParams {
        let k = rng.random_range(1..4);
        let mut w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        let means = (0..k).map(|_| rng.random_range(-20.0..20.0)).collect();
        let scales = (0..k).map(|_| rng.random_range(0.01..6.0)).collect();
        GmmParams::new(w, means, scales).unwrap()
    }

    #[test]
    fn round_trip_including_escapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params: Vec<GmmParams> = (0..3000).map(|_| random_params(&mut rng)).collect();
        let symbols: Vec<i64> = (0..3000)
            .map(|i| if i % 97 == 0 { rng.random_range(-100_000..100_000) } else { rng.random_range(-30..30) })
            .collect();
        let bytes = encode_all(&symbols, |i| params[i].clone());
        assert_eq!(decode_all(&bytes, symbols.len(), |i| params[i].clone()).unwrap(), symbols);
    }

    #[test]
    fn peaked_model_is_nearly_free() {
        // P(0) = 0.999 under a narrow Gaussian centred at zero.
        let sigma = 0.5 / 3.290_526_731_491_896; // Phi^-1(0.9995)
        let g = GmmParams::single(0.0, sigma).unwrap();
        let p0 = super::super::gmm::gmm_likelihood(0.0, &g);
        assert!((p0 - 0.999).abs() < 1e-6);
        let n = 10_000;
        let bytes = encode_all(&vec![0; n], |_| g.clone());
        assert!((bytes.len() * 8) as f64 / (n as f64) < 0.02, "{} bytes", bytes.len());
    }
}
