//! `.rfdc` container.
//!
//! ```text
//! "RFDC" version:u8 height:u16 width:u16 pad[top,left,bottom,right]:u8x4
//! lambda_id:u8 flags:u8 [ambient:f32x3]
//! leb128 lengths: T-stream bytes, index bits, hyper bytes, z bytes, W bytes per scale
//! padding_bits:u8
//! payload: T-stream | hyper | z | W... | index bits | zero padding
//! crc32:u32 over everything before it
//! ```
//!
//! The ambient light and the T stream are present only when style
//! normalisation is on, the one place the decoder reads input priors.
//! All multi-byte integers are little-endian; bits are packed MSB-first.

use serde::{Deserialize, Serialize};

use super::bits::{read_leb128, write_leb128, BitReader, BitWriter};
use crate::codec::entropy::{decode_symbol, encode_symbol};
use crate::codec::gmm::GmmParams;
use crate::codec::range_coder::{RangeDecoder, RangeEncoder};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RFDC";
pub const VERSION: u8 = 1;
/// Spatial stride of the transmitted transmission grid.
pub const PRIOR_GRID_STRIDE: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub top: u8,
    pub left: u8,
    pub bottom: u8,
    pub right: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flags {
    pub usnb: bool,
    pub rfvm: bool,
    /// Active reference scales, ascending, subset of {2, 3, 4}.
    pub scales: Vec<usize>,
}

impl Flags {
    fn to_byte(&self) -> u8 {
        let mut b = self.usnb as u8 | (self.rfvm as u8) << 1;
        for &s in &self.scales {
            b |= 1 << s;
        }
        b
    }

    fn from_byte(b: u8) -> Result<Flags> {
        if b & 0b1110_0000 != 0 {
            return Err(Error::Format(format!("unknown flag bits {b:#010b}")));
        }
        Ok(Flags { usnb: b & 1 != 0, rfvm: b & 2 != 0, scales: (2..=4).filter(|s| b & (1 << s) != 0).collect() })
    }

    pub fn w_streams(&self) -> usize {
        if self.rfvm {
            self.scales.len()
        } else {
            0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub height: usize,
    pub width: usize,
    pub padding: Padding,
    pub lambda_id: u8,
    pub flags: Flags,
    pub ambient: [f32; 3],
    /// 8-bit transmission on the prior grid, `[3, gh, gw]`; empty when no scale is active.
    pub transmission: Vec<u8>,
    pub index_bits: Vec<u8>,
    pub index_bit_len: usize,
    pub hyper_stream: Vec<u8>,
    pub z_stream: Vec<u8>,
    pub w_streams: Vec<Vec<u8>>,
}

/// Bit accounting of one packed container.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BitBreakdown {
    pub bits_z: u64,
    /// W streams plus header, priors, length fields and checksum.
    pub bits_w: u64,
    pub bits_index: u64,
    pub padding_bits: u64,
    pub file_bits: u64,
}

impl BitBreakdown {
    pub fn payload_bits(&self) -> u64 {
        self.bits_z + self.bits_w + self.bits_index
    }

    pub fn bpp(&self, height: usize, width: usize) -> Result<f64> {
        compute_bpp(self.bits_z, self.bits_w, self.bits_index, height, width)
    }
}

pub fn compute_bpp(bits_z: u64, bits_w: u64, bits_index: u64, height: usize, width: usize) -> Result<f64> {
    if height == 0 || width == 0 {
        return Err(Error::Domain("bpp of a zero-area image".into()));
    }
    Ok((bits_z + bits_w + bits_index) as f64 / (height * width) as f64)
}

impl Container {
    pub fn padded_size(&self) -> (usize, usize) {
        (
            self.height + self.padding.top as usize + self.padding.bottom as usize,
            self.width + self.padding.left as usize + self.padding.right as usize,
        )
    }

    /// Shape `[3, gh, gw]` of the transmitted transmission grid.
    pub fn prior_grid(&self) -> (usize, usize) {
        let (h, w) = self.padded_size();
        (h.div_ceil(PRIOR_GRID_STRIDE), w.div_ceil(PRIOR_GRID_STRIDE))
    }

    /// Whether ambient light and transmission travel in the container.
    pub fn carries_priors(&self) -> bool {
        self.flags.usnb && !self.flags.scales.is_empty()
    }

    fn expected_transmission_len(&self) -> usize {
        if !self.carries_priors() {
            0
        } else {
            let (gh, gw) = self.prior_grid();
            3 * gh * gw
        }
    }

    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.height > u16::MAX as usize || self.width > u16::MAX as usize {
            return Err(Error::Domain(format!("image size {}x{} not representable", self.height, self.width)));
        }
        if self.transmission.len() != self.expected_transmission_len() {
            return Err(Error::Dimension(format!(
                "transmission grid has {} values, expected {}",
                self.transmission.len(),
                self.expected_transmission_len()
            )));
        }
        if !self.carries_priors() && self.ambient != [0.0; 3] {
            return Err(Error::Domain("ambient light set but not carried by these flags".into()));
        }
        if self.w_streams.len() != self.flags.w_streams() {
            return Err(Error::Dimension(format!("{} W streams for flags {:?}", self.w_streams.len(), self.flags)));
        }
        if self.index_bits.len() * 8 < self.index_bit_len {
            return Err(Error::Dimension("index bit buffer shorter than declared".into()));
        }
        Ok(())
    }

    pub fn pack(&self) -> Result<Vec<u8>> {
        Ok(self.pack_with_breakdown()?.0)
    }

    pub fn pack_with_breakdown(&self) -> Result<(Vec<u8>, BitBreakdown)> {
        self.validate()?;
        let (gh, gw) = self.prior_grid();
        let t_stream = encode_transmission(&self.transmission, gh, gw);
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.height as u16).to_le_bytes());
        out.extend_from_slice(&(self.width as u16).to_le_bytes());
        out.extend_from_slice(&[self.padding.top, self.padding.left, self.padding.bottom, self.padding.right]);
        out.push(self.lambda_id);
        out.push(self.flags.to_byte());
        if self.carries_priors() {
            for a in self.ambient {
                out.extend_from_slice(&a.to_le_bytes());
            }
        }
        write_leb128(&mut out, t_stream.len() as u64);
        write_leb128(&mut out, self.index_bit_len as u64);
        write_leb128(&mut out, self.hyper_stream.len() as u64);
        write_leb128(&mut out, self.z_stream.len() as u64);
        for w in &self.w_streams {
            write_leb128(&mut out, w.len() as u64);
        }
        let padding_bits = ((8 - self.index_bit_len % 8) % 8) as u8;
        out.push(padding_bits);

        let mut payload = BitWriter::new();
        payload.write_bytes(&t_stream);
        payload.write_bytes(&self.hyper_stream);
        payload.write_bytes(&self.z_stream);
        for w in &self.w_streams {
            payload.write_bytes(w);
        }
        payload.write_bit_slice(&self.index_bits, self.index_bit_len);
        payload.align();
        out.extend_from_slice(payload.as_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());

        let file_bits = 8 * out.len() as u64;
        let bits_z = 8 * (self.hyper_stream.len() + self.z_stream.len()) as u64;
        let bits_index = self.index_bit_len as u64;
        let bits_w = file_bits - bits_z - bits_index - padding_bits as u64;
        Ok((out, BitBreakdown { bits_z, bits_w, bits_index, padding_bits: padding_bits as u64, file_bits }))
    }

    pub fn unpack(bytes: &[u8]) -> Result<Container> {
        Ok(Container::unpack_with_breakdown(bytes)?.0)
    }

    pub fn unpack_with_breakdown(bytes: &[u8]) -> Result<(Container, BitBreakdown)> {
        if bytes.len() < 5 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not an .rfdc container (bad magic)".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Version { found: bytes[4], expected: VERSION });
        }
        if bytes.len() < 4 + 1 + 4 + 4 + 2 + 4 {
            return Err(Error::Format("container truncated".into()));
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
            return Err(Error::Corruption("container checksum mismatch".into()));
        }
        let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]) as usize;
        let height = u16_at(5);
        let width = u16_at(7);
        let padding = Padding { top: body[9], left: body[10], bottom: body[11], right: body[12] };
        let lambda_id = body[13];
        let flags = Flags::from_byte(body[14])?;
        let mut ambient = [0f32; 3];
        let mut pos = 15;
        if flags.usnb && !flags.scales.is_empty() {
            if body.len() < pos + 12 {
                return Err(Error::Format("container truncated".into()));
            }
            for (c, a) in ambient.iter_mut().enumerate() {
                *a = f32::from_le_bytes(body[pos + 4 * c..pos + 4 + 4 * c].try_into().unwrap());
            }
            pos += 12;
        }
        let t_len = read_leb128(body, &mut pos)? as usize;
        let index_bit_len = read_leb128(body, &mut pos)? as usize;
        let hyper_len = read_leb128(body, &mut pos)? as usize;
        let z_len = read_leb128(body, &mut pos)? as usize;
        let w_lens: Vec<usize> =
            (0..flags.w_streams()).map(|_| read_leb128(body, &mut pos).map(|v| v as usize)).collect::<Result<_>>()?;
        let padding_bits = *body.get(pos).ok_or_else(|| Error::Format("container truncated".into()))?;
        pos += 1;

        let payload_bits = 8 * (t_len + hyper_len + z_len + w_lens.iter().sum::<usize>()) + index_bit_len;
        if padding_bits as usize != (8 - index_bit_len % 8) % 8 || 8 * (body.len() - pos) != payload_bits + padding_bits as usize {
            return Err(Error::Format("declared stream lengths disagree with the file size".into()));
        }
        let mut r = BitReader::new(&body[pos..]);
        let t_stream = r.read_bytes(t_len)?;
        let hyper_stream = r.read_bytes(hyper_len)?;
        let z_stream = r.read_bytes(z_len)?;
        let w_streams = w_lens.iter().map(|&n| r.read_bytes(n)).collect::<Result<Vec<_>>>()?;
        let index_bits = r.read_bit_slice(index_bit_len)?;
        if r.read_bits(padding_bits as u32)? != 0 {
            return Err(Error::Corruption("non-zero padding bits".into()));
        }

        let mut c = Container {
            height,
            width,
            padding,
            lambda_id,
            flags,
            ambient,
            transmission: Vec::new(),
            index_bits,
            index_bit_len,
            hyper_stream,
            z_stream,
            w_streams,
        };
        let (gh, gw) = c.prior_grid();
        c.transmission = if c.carries_priors() { decode_transmission(&t_stream, gh, gw)? } else { Vec::new() };
        if !c.carries_priors() && !t_stream.is_empty() {
            return Err(Error::Format("transmission stream present without style normalisation".into()));
        }
        c.validate()?;
        let file_bits = 8 * bytes.len() as u64;
        let bits_z = 8 * (hyper_len + z_len) as u64;
        let bits_index = index_bit_len as u64;
        let bits_w = file_bits - bits_z - bits_index - padding_bits as u64;
        Ok((c, BitBreakdown { bits_z, bits_w, bits_index, padding_bits: padding_bits as u64, file_bits }))
    }
}

/// Residual scales the encoder chooses from; the choice costs three bits.
const T_SCALES: [f64; 8] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

/// Planar prediction `left + above - above_left` within each `gh x gw` plane;
/// a plane's first value is predicted from the previous plane's first value
/// (128 for the first plane).
fn predict(values: &[u8], gh: usize, gw: usize, i: usize) -> f64 {
    let plane = gh * gw;
    let (c, y, x) = (i / plane, (i % plane) / gw, i % gw);
    let at = |yy: usize, xx: usize| values[c * plane + yy * gw + xx] as i32;
    let p = match (y, x) {
        (0, 0) if c == 0 => 128,
        (0, 0) => values[(c - 1) * plane] as i32,
        (0, _) => at(0, x - 1),
        (_, 0) => at(y - 1, 0),
        _ => (at(y, x - 1) + at(y - 1, x) - at(y - 1, x - 1)).clamp(0, 255),
    };
    p as f64
}

fn encode_with_scale(values: &[u8], gh: usize, gw: usize, choice: usize) -> Vec<u8> {
    let mut enc = RangeEncoder::new();
    enc.encode_bits(choice as u64, 3);
    for (i, &v) in values.iter().enumerate() {
        let params = GmmParams::single(predict(values, gh, gw, i), T_SCALES[choice]).expect("valid scale");
        encode_symbol(&mut enc, v as i64, &params);
    }
    enc.finish()
}

/// Predictive coding of the 8-bit transmission grid, shortest of the scale choices.
fn encode_transmission(values: &[u8], gh: usize, gw: usize) -> Vec<u8> {
    if values.is_empty() {
        return Vec::new();
    }
    (0..T_SCALES.len()).map(|c| encode_with_scale(values, gh, gw, c)).min_by_key(|b| b.len()).expect("non-empty table")
}

fn decode_transmission(stream: &[u8], gh: usize, gw: usize) -> Result<Vec<u8>> {
    let n = 3 * gh * gw;
    let mut dec = RangeDecoder::new(stream);
    let choice = dec.decode_bits(3) as usize;
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        values.push(0);
        let params = GmmParams::single(predict(&values, gh, gw, i), T_SCALES[choice])?;
        let v = decode_symbol(&mut dec, &params)?;
        values[i] = u8::try_from(v).map_err(|_| Error::Corruption(format!("transmission level {v}")))?;
    }
    Ok(values)
}

/// Breakdown printed by `rfdc inspect`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectReport {
    pub bits_z: u64,
    #[serde(rename = "bits_W")]
    pub bits_w: u64,
    pub bits_index: u64,
    pub bpp: f64,
    pub dims: [usize; 2],
}

pub fn inspect(bytes: &[u8]) -> Result<InspectReport> {
    let (c, b) = Container::unpack_with_breakdown(bytes)?;
    Ok(InspectReport {
        bits_z: b.bits_z,
        bits_w: b.bits_w,
        bits_index: b.bits_index,
        bpp: b.bpp(c.height, c.width)?,
        dims: [c.height, c.width],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> Container {
        Container {
            height: 60,
            width: 64,
            padding: Padding { top: 0, left: 0, bottom: 4, right: 0 },
            lambda_id: 2,
            flags: Flags { usnb: true, rfvm: true, scales: vec![2, 3, 4] },
            ambient: [0.1, 0.5, 0.6],
            transmission: (0..48).map(|i| 100 + (i % 5) as u8).collect(),
            index_bits: vec![0b1011_0110, 0b1000_0000],
            index_bit_len: 11,
            hyper_stream: vec![1, 2, 3],
            z_stream: vec![9; 40],
            w_streams: vec![vec![7; 5], vec![8; 3], vec![]],
        }
    }

    #[test]
    fn round_trip_and_audit() {
        let c = sample();
        let (bytes, b) = c.pack_with_breakdown().unwrap();
        let (back, b2) = Container::unpack_with_breakdown(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(b, b2);
        assert_eq!(b.payload_bits() + b.padding_bits, 8 * bytes.len() as u64);
        assert_eq!(b.bits_z, 8 * 43);
        assert_eq!(b.bits_index, 11);
        assert_eq!(b.padding_bits, 5);
    }

    #[test]
    fn priors_only_with_style_normalisation() {
        let mut c = sample();
        c.flags.usnb = false;
        assert!(c.pack().is_err());
        c.transmission.clear();
        assert!(c.pack().is_err());
        c.ambient = [0.0; 3];
        let bytes = c.pack().unwrap();
        assert_eq!(Container::unpack(&bytes).unwrap(), c);
        assert!(bytes.len() + 12 < sample().pack().unwrap().len());
    }

    #[test]
    fn smooth_transmission_is_cheap_and_exact() {
        let (gh, gw) = (12, 20);
        let smooth: Vec<u8> = (0..3 * gh * gw)
            .map(|i| {
                let (c, y, x) = (i / (gh * gw), (i / gw) % gh, i % gw);
                (40 + 60 * c + 4 * y + x) as u8
            })
            .collect();
        let stream = encode_transmission(&smooth, gh, gw);
        assert!(4 * stream.len() < smooth.len(), "{} bytes for {} values", stream.len(), smooth.len());
        assert_eq!(decode_transmission(&stream, gh, gw).unwrap(), smooth);
        let noisy: Vec<u8> = (0..3 * gh * gw).map(|i| ((i * 7919) % 256) as u8).collect();
        let stream = encode_transmission(&noisy, gh, gw);
        assert_eq!(decode_transmission(&stream, gh, gw).unwrap(), noisy);
    }

    #[test]
    fn corruption_and_version_errors() {
        let bytes = sample().pack().unwrap();
        let mut flipped = bytes.clone();
        // somewhere inside the z stream
        let z_at = bytes.len() - 4 - 2 - 8 - 10;
        flipped[z_at] ^= 0xFF;
        assert!(matches!(Container::unpack(&flipped), Err(Error::Corruption(_))));
        let mut bumped = bytes.clone();
        bumped[4] += 1;
        assert!(matches!(Container::unpack(&bumped), Err(Error::Version { .. })));
        let mut magic = bytes.clone();
        magic[1] = b'X';
        assert!(matches!(Container::unpack(&magic), Err(Error::Format(_))));
    }

    #[test]
    fn bpp_arithmetic() {
        assert!((compute_bpp(4000, 700, 100, 100, 100).unwrap() - 0.48).abs() < 1e-12);
        assert_eq!(compute_bpp(0, 0, 0, 10, 10).unwrap(), 0.0);
        assert!(compute_bpp(1, 1, 1, 0, 10).is_err());
    }

    #[test]
    fn inspect_reports_breakdown() {
        let bytes = sample().pack().unwrap();
        let r = inspect(&bytes).unwrap();
        assert_eq!(r.dims, [60, 64]);
        assert!((r.bpp - (8.0 * bytes.len() as f64 - 5.0) / (60.0 * 64.0)).abs() < 1e-12);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json.get("bits_W").is_some());
    }
}
