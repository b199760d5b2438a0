//! Canonical Huffman code for reference indices.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};

const MAX_LEN: u8 = 32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct HuffmanCode {
    freqs: Vec<u64>,
    lengths: Vec<u8>,
    codes: Vec<u32>,
    /// Symbols ordered by (length, symbol).
    sorted: Vec<usize>,
    count_per_len: Vec<u32>,
}

impl TryFrom<Vec<u64>> for HuffmanCode {
    type Error = Error;
    fn try_from(freqs: Vec<u64>) -> Result<Self> {
        HuffmanCode::from_freqs(&freqs)
    }
}

impl From<HuffmanCode> for Vec<u64> {
    fn from(code: HuffmanCode) -> Vec<u64> {
        code.freqs
    }
}

impl HuffmanCode {
    /// Code for `k` symbols from observed indices with add-one smoothing.
    pub fn from_observations(indices: &[usize], k: usize) -> Result<Self> {
        let mut freqs = vec![1u64; k];
        for &i in indices {
            *freqs.get_mut(i).ok_or_else(|| Error::Domain(format!("index {i} outside alphabet of {k}")))? += 1;
        }
        HuffmanCode::from_freqs(&freqs)
    }

    pub fn uniform(k: usize) -> Result<Self> {
        HuffmanCode::from_freqs(&vec![1; k])
    }

    /// Every frequency must be positive.
    pub fn from_freqs(freqs: &[u64]) -> Result<Self> {
        let k = freqs.len();
        if k == 0 || freqs.contains(&0) {
            return Err(Error::Domain("frequency table must cover every symbol with a positive count".into()));
        }
        let lengths = code_lengths(freqs);
        if lengths.iter().any(|&l| l > MAX_LEN) {
            return Err(Error::Domain("frequency table yields codes longer than 32 bits".into()));
        }
        let mut sorted: Vec<usize> = (0..k).collect();
        sorted.sort_by_key(|&s| (lengths[s], s));
        let mut codes = vec![0u32; k];
        let mut count_per_len = vec![0u32; MAX_LEN as usize + 1];
        let mut code: u64 = 0;
        let mut prev_len = lengths[sorted[0]];
        for (n, &s) in sorted.iter().enumerate() {
            let l = lengths[s];
            if n > 0 {
                code = (code + 1) << (l - prev_len);
            }
            prev_len = l;
            codes[s] = code as u32;
            count_per_len[l as usize] += 1;
        }
        Ok(HuffmanCode { freqs: freqs.to_vec(), lengths, codes, sorted, count_per_len })
    }

    pub fn alphabet(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    pub fn freqs(&self) -> &[u64] {
        &self.freqs
    }

    pub fn code_len(&self, symbol: usize) -> u8 {
        self.lengths[symbol]
    }

    pub fn kraft_sum(&self) -> f64 {
        self.lengths.iter().map(|&l| 2f64.powi(-(l as i32))).sum()
    }

    pub fn encode(&self, w: &mut BitWriter, symbol: usize) -> Result<()> {
        if symbol >= self.alphabet() {
            return Err(Error::Domain(format!("index {symbol} outside alphabet of {}", self.alphabet())));
        }
        w.write_bits(self.codes[symbol] as u64, self.lengths[symbol] as u32);
        Ok(())
    }

    pub fn decode(&self, r: &mut BitReader) -> Result<usize> {
        let (mut code, mut first, mut index) = (0u64, 0u64, 0u64);
        for len in 1..=MAX_LEN as usize {
            code |= r.read_bit()? as u64;
            let count = self.count_per_len[len] as u64;
            if code < first + count {
                return Ok(self.sorted[(index + code - first) as usize]);
            }
            index += count;
            first = (first + count) << 1;
            code <<= 1;
        }
        Err(Error::Corruption("invalid Huffman code".into()))
    }
}

/// Huffman code lengths; a lone symbol gets length 1. Ties merge the node
/// created first, so the result is deterministic.
fn code_lengths(freqs: &[u64]) -> Vec<u8> {
    let k = freqs.len();
    if k == 1 {
        return vec![1];
    }
    let mut parent = vec![usize::MAX; 2 * k - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = freqs.iter().enumerate().map(|(i, &f)| Reverse((f, i))).collect();
    let mut next = k;
    while heap.len() > 1 {
        let Reverse((fa, a)) = heap.pop().unwrap();
        let Reverse((fb, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((fa + fb, next)));
        next += 1;
    }
    let root = next - 1;
    let mut depth = vec![0u8; 2 * k - 1];
    for node in (0..root).rev() {
        depth[node] = depth[parent[node]].saturating_add(1);
    }
    depth.truncate(k);
    depth
}
