use crate::error::{Error, Result};

/// MSB-first bit sink.
#[derive(Clone, Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        BitWriter::default()
    }

    pub fn len_bits(&self) -> usize {
        self.len
    }

    pub fn write_bit(&mut self, bit: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    pub fn write_bits(&mut self, value: u64, count: u32) {
        for i in (0..count).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) {
        if self.len % 8 == 0 {
            self.bytes.extend_from_slice(bytes);
            self.len += 8 * bytes.len();
        } else {
            for &b in bytes {
                self.write_bits(b as u64, 8);
            }
        }
    }

    /// Appends the first `count` bits of `bits` (MSB-first).
    pub fn write_bit_slice(&mut self, bits: &[u8], count: usize) {
        for i in 0..count {
            self.write_bit(bits[i / 8] & (0x80 >> (i % 8)) != 0);
        }
    }

    /// Zero-pads to a byte boundary; returns the number of padding bits.
    pub fn align(&mut self) -> u8 {
        let pad = (8 - self.len % 8) % 8;
        self.len += pad;
        pad as u8
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}

/// MSB-first bit source.
#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        8 * self.bytes.len() - self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        let byte = self.bytes.get(self.pos / 8).ok_or_else(|| Error::Format("bitstream ended early".into()))?;
        let bit = byte & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, count: u32) -> Result<u64> {
        let mut v = 0;
        for _ in 0..count {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Ok(v)
    }

    pub fn read_bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        if self.remaining() < 8 * n {
            return Err(Error::Format("bitstream ended early".into()));
        }
        if self.pos % 8 == 0 {
            let start = self.pos / 8;
            self.pos += 8 * n;
            return Ok(self.bytes[start..start + n].to_vec());
        }
        (0..n).map(|_| self.read_bits(8).map(|b| b as u8)).collect()
    }

    /// Copies the next `count` bits into a fresh MSB-first buffer.
    pub fn read_bit_slice(&mut self, count: usize) -> Result<Vec<u8>> {
        let mut w = BitWriter::new();
        for _ in 0..count {
            w.write_bit(self.read_bit()?);
        }
        Ok(w.into_bytes())
    }
}

pub fn write_leb128(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7F) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub fn read_leb128(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let b = *bytes.get(*pos).ok_or_else(|| Error::Format("truncated length field".into()))?;
        *pos += 1;
        v |= ((b & 0x7F) as u64) << shift;
        if b & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(Error::Format("length field too long".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unaligned_round_trip() {
        let mut w = BitWriter::new();
        w.write_bits(0b101, 3);
        w.write_bytes(&[0xAB, 0x01]);
        w.write_bit_slice(&[0b1100_0000], 2);
        assert_eq!(w.len_bits(), 3 + 16 + 2);
        assert_eq!(w.align(), 3);
        let bytes = w.into_bytes();
        assert_eq!(bytes.len(), 3);
        let mut r = BitReader::new(&bytes);
        assert_eq!(r.read_bits(3).unwrap(), 0b101);
        assert_eq!(r.read_bytes(2).unwrap(), vec![0xAB, 0x01]);
        assert_eq!(r.read_bit_slice(2).unwrap(), vec![0b1100_0000]);
        assert_eq!(r.remaining(), 3);
    }

    #[test]
    fn leb128_round_trip() {
        for v in [0u64, 1, 127, 128, 300, 1 << 40] {
            let mut out = Vec::new();
            write_leb128(&mut out, v);
            let mut pos = 0;
            assert_eq!(read_leb128(&out, &mut pos).unwrap(), v);
            assert_eq!(pos, out.len());
        }
    }
}
