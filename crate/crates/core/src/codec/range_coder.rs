//! 32-bit range coder with carry propagation and bypass bits.
//!
//! Streams are finished with the shortest byte string that still decodes:
//! `low` is rounded up to a multiple of 2^24, trailing zero bytes are
//! dropped, and the decoder reads zeros past the end.

use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
    skipped_lead: bool,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        RangeEncoder::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder { low: 0, range: u32::MAX, cache: 0, cache_size: 1, out: Vec::new(), skipped_lead: false }
    }

    fn emit(&mut self, byte: u8) {
        // The first byte produced is always the initial empty cache.
        if self.skipped_lead {
            self.out.push(byte);
        } else {
            self.skipped_lead = true;
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || self.low >> 32 != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.emit(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// Codes the interval `[cum, cum + freq)` out of `total` (at most 2^16).
    pub fn encode(&mut self, cum: u32, freq: u32, total: u32) {
        debug_assert!(freq > 0 && cum + freq <= total && total <= 1 << 16);
        let r = self.range / total;
        self.low += r as u64 * cum as u64;
        self.range = r * freq;
        self.normalize();
    }

    pub fn encode_bit(&mut self, bit: bool) {
        self.range >>= 1;
        if bit {
            self.low += self.range as u64;
        }
        self.normalize();
    }

    pub fn encode_bits(&mut self, value: u64, count: u32) {
        for i in (0..count).rev() {
            self.encode_bit((value >> i) & 1 == 1);
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        let rounded = (self.low + (TOP as u64 - 1)) & !(TOP as u64 - 1);
        debug_assert!(rounded < self.low + self.range as u64);
        self.low = rounded;
        self.shift_low();
        self.shift_low();
        while self.out.last() == Some(&0) {
            self.out.pop();
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut d = RangeDecoder { code: 0, range: u32::MAX, input, pos: 0 };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte() as u32;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next_byte() as u32;
        }
    }

    /// Target count in `[0, total)`; follow with [`RangeDecoder::consume`].
    pub fn peek(&mut self, total: u32) -> u32 {
        self.range /= total;
        (self.code / self.range).min(total - 1)
    }

    pub fn consume(&mut self, cum: u32, freq: u32) -> Result<()> {
        let off = self.range.checked_mul(cum).ok_or_else(corrupt)?;
        self.code = self.code.checked_sub(off).ok_or_else(corrupt)?;
        self.range *= freq;
        if self.code >= self.range {
            return Err(corrupt());
        }
        self.normalize();
        Ok(())
    }

    pub fn decode_bit(&mut self) -> bool {
        self.range >>= 1;
        let bit = self.code >= self.range;
        if bit {
            self.code -= self.range;
        }
        self.normalize();
        bit
    }

    pub fn decode_bits(&mut self, count: u32) -> u64 {
        (0..count).fold(0, |acc, _| (acc << 1) | self.decode_bit() as u64)
    }
}

fn corrupt() -> Error {
    Error::Corruption("range-coded stream is inconsistent with its model".into())
}

/// Cumulative frequency table with total `cum.last()`.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqTable {
    cum: Vec<u32>,
}

impl FreqTable {
    pub const TOTAL_BITS: u32 = 16;
    pub const TOTAL: u32 = 1 << 16;

    /// Quantizes `probs` to frequencies summing to 2^16 with every symbol at least 1.
    pub fn from_probs(probs: &[f64]) -> Self {
        let n = probs.len();
        assert!(n >= 1 && n as u32 <= Self::TOTAL / 2, "alphabet of {n} symbols does not fit");
        let spare = (Self::TOTAL - n as u32) as f64;
        let mut freq: Vec<u32> = probs.iter().map(|&p| 1 + (p.clamp(0.0, 1.0) * spare).floor() as u32).collect();
        let sum: u32 = freq.iter().sum();
        // floor() can only undershoot; the remainder goes to the most likely symbol.
        let largest = (0..n).max_by(|&a, &b| freq[a].cmp(&freq[b]).then(b.cmp(&a))).unwrap();
        freq[largest] += Self::TOTAL.saturating_sub(sum);
        Self::from_freqs(&freq)
    }

    pub fn from_freqs(freq: &[u32]) -> Self {
        let mut cum = Vec::with_capacity(freq.len() + 1);
        cum.push(0);
        for &f in freq {
            assert!(f > 0, "zero frequency");
            cum.push(cum.last().unwrap() + f);
        }
        FreqTable { cum }
    }

    pub fn len(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total(&self) -> u32 {
        *self.cum.last().unwrap()
    }

    pub fn freq(&self, s: usize) -> u32 {
        self.cum[s + 1] - self.cum[s]
    }

    pub fn encode(&self, enc: &mut RangeEncoder, s: usize) {
        enc.encode(self.cum[s], self.freq(s), self.total());
    }

    pub fn decode(&self, dec: &mut RangeDecoder) -> Result<usize> {
        let target = dec.peek(self.total());
        let s = self.cum.partition_point(|&c| c <= target) - 1;
        dec.consume(self.cum[s], self.freq(s))?;
        Ok(s)
    }

    /// Ideal code length of `s` under the quantized table.
    pub fn cost_bits(&self, s: usize) -> f64 {
        (self.total() as f64 / self.freq(s) as f64).log2()
    }
}

/// Adaptive frequency model over a small alphabet.
#[derive(Clone, Debug)]
pub struct AdaptiveModel {
    freq: Vec<u32>,
    increment: u32,
}

impl AdaptiveModel {
    const LIMIT: u32 = 1 << 16;

    pub fn new(symbols: usize, increment: u32) -> Self {
        AdaptiveModel { freq: vec![1; symbols], increment }
    }

    fn table(&self) -> FreqTable {
        FreqTable::from_freqs(&self.freq)
    }

    fn update(&mut self, s: usize) {
        self.freq[s] += self.increment;
        if self.freq.iter().sum::<u32>() > Self::LIMIT {
            for f in &mut self.freq {
                *f = (*f).div_ceil(2);
            }
        }
    }

    pub fn encode(&mut self, enc: &mut RangeEncoder, s: usize) {
        self.table().encode(enc, s);
        self.update(s);
    }

    pub fn decode(&mut self, dec: &mut RangeDecoder) -> Result<usize> {
        let s = self.table().decode(dec)?;
        self.update(s);
        Ok(s)
    }
}

/// Elias-gamma code for `n >= 1` as bypass bits.
pub fn encode_gamma(enc: &mut RangeEncoder, n: u64) {
    debug_assert!(n >= 1);
    let nbits = 63 - n.leading_zeros();
    enc.encode_bits(0, nbits);
    enc.encode_bits(n, nbits + 1);
}

pub fn decode_gamma(dec: &mut RangeDecoder) -> Result<u64> {
    let mut zeros = 0;
    while !dec.decode_bit() {
        zeros += 1;
        if zeros > 62 {
            return Err(corrupt());
        }
    }
    Ok((1 << zeros) | dec.decode_bits(zeros))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_mixed_symbols_and_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let table = FreqTable::from_probs(&[0.7, 0.2, 0.05, 0.05]);
        let mut enc = RangeEncoder::new();
        let mut script = Vec::new();
        for _ in 0..5000 {
            let s = rng.random_range(0..4usize);
            let bits = rng.random_range(0..20u64);
            let g = rng.random_range(1..1000u64);
            table.encode(&mut enc, s);
            enc.encode_bits(bits, 5);
            encode_gamma(&mut enc, g);
            script.push((s, bits, g));
        }
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes);
        for &(s, bits, g) in &script {
            assert_eq!(table.decode(&mut dec).unwrap(), s);
            assert_eq!(dec.decode_bits(5), bits);
            assert_eq!(decode_gamma(&mut dec).unwrap(), g);
        }
    }

    #[test]
    fn empty_stream_is_empty() {
        assert!(RangeEncoder::new().finish().is_empty());
    }

    #[test]
    fn uniform_byte_alphabet_costs_eight_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let table = FreqTable::from_freqs(&[256; 256]);
        let n = 4000;
        let mut enc = RangeEncoder::new();
        let syms: Vec<usize> = (0..n).map(|_| rng.random_range(0..256)).collect();
        for &s in &syms {
            table.encode(&mut enc, s);
        }
        let bytes = enc.finish();
        let bits = bytes.len() as i64 * 8;
        assert!((bits - 8 * n as i64).abs() <= 64, "{bits} bits");
        let mut dec = RangeDecoder::new(&bytes);
        assert!(syms.iter().all(|&s| table.decode(&mut dec).unwrap() == s));
    }

    #[test]
    fn adaptive_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let syms: Vec<usize> = (0..3000).map(|_| rng.random_range(0..3usize) * rng.random_range(0..2usize)).collect();
        let mut m = AdaptiveModel::new(256, 24);
        let mut enc = RangeEncoder::new();
        for &s in &syms {
            m.encode(&mut enc, s);
        }
        let bytes = enc.finish();
        let mut m = AdaptiveModel::new(256, 24);
        let mut dec = RangeDecoder::new(&bytes);
        assert!(syms.iter().all(|&s| m.decode(&mut dec).unwrap() == s));
    }

    #[test]
    fn probs_quantize_to_full_total() {
        let t = FreqTable::from_probs(&[0.999, 0.0005, 0.0005, 0.0]);
        assert_eq!(t.total(), FreqTable::TOTAL);
        assert!((0..4).all(|s| t.freq(s) >= 1));
    }
}
