//! The `.uwfd` dictionary file.
//!
//! Layout (little-endian): `UWFD`, version byte, 32-byte backbone fingerprint,
//! `K` (u32), scale count (u8) and the scales (u8 each), channels (u32), patch
//! side (u32). Then, per scale, `K` entry tensors as f32 followed by `K` prior
//! blocks (ambient light then the pooled transmission map, f32). The file ends
//! with a u32-length-prefixed JSON metadata object.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Planes;
use crate::nn::Tensor;

pub const MAGIC: &[u8; 4] = b"UWFD";
pub const VERSION: u8 = 1;

/// Ambient light and transmission pooled to an entry's feature grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryPriors {
    pub ambient: [f64; 3],
    pub transmission: Planes,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DictScale {
    pub scale: usize,
    pub entries: Vec<Tensor>,
    pub priors: Vec<EntryPriors>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDictionary {
    pub k: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub fingerprint: [u8; 32],
    pub scales: Vec<DictScale>,
    pub metadata: serde_json::Value,
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl FeatureDictionary {
    /// Validates shapes and rounds every value to f32 so that a save/load cycle is exact.
    pub fn new(
        channels: usize,
        patch_size: usize,
        fingerprint: [u8; 32],
        mut scales: Vec<DictScale>,
        metadata: serde_json::Value,
    ) -> Result<Self> {
        let k = scales.first().map(|s| s.entries.len()).unwrap_or(0);
        if k == 0 {
            return Err(Error::Configuration("dictionary has no entries".into()));
        }
        for s in &mut scales {
            let side = patch_size >> s.scale;
            if !(1..=4).contains(&s.scale) || side == 0 || side << s.scale != patch_size {
                return Err(Error::Dimension(format!("scale {} does not divide patch side {patch_size}", s.scale)));
            }
            if s.entries.len() != k || s.priors.len() != k {
                return Err(Error::Dimension(format!("scale {} has {} entries, expected {k}", s.scale, s.entries.len())));
            }
            for e in &mut s.entries {
                if e.shape() != [channels, side, side] {
                    return Err(Error::Dimension(format!("entry shape {:?} at scale {}", e.shape(), s.scale)));
                }
                if !e.is_finite() {
                    return Err(Error::Domain(format!("non-finite dictionary entry at scale {}", s.scale)));
                }
                e.data_mut().iter_mut().for_each(|v| *v = round_f32(*v));
            }
            for p in &mut s.priors {
                if p.transmission.height != side || p.transmission.width != side {
                    return Err(Error::Dimension(format!("entry priors at scale {} are not {side}x{side}", s.scale)));
                }
                p.ambient.iter_mut().for_each(|v| *v = round_f32(*v));
                p.transmission.data.iter_mut().for_each(|v| *v = round_f32(*v));
            }
        }
        Ok(FeatureDictionary { k, channels, patch_size, fingerprint, scales, metadata })
    }

    pub fn scale(&self, s: usize) -> Option<&DictScale> {
        self.scales.iter().find(|d| d.scale == s)
    }

    pub fn scale_list(&self) -> Vec<usize> {
        self.scales.iter().map(|s| s.scale).collect()
    }

    /// Errors unless the dictionary was built with the backbone identified by `fingerprint`.
    pub fn check_fingerprint(&self, fingerprint: &[u8; 32]) -> Result<()> {
        if &self.fingerprint != fingerprint {
            return Err(Error::Incompatible {
                expected: crate::codec::checkpoint::hex(fingerprint),
                found: crate::codec::checkpoint::hex(&self.fingerprint),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.fingerprint);
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.push(self.scales.len() as u8);
        out.extend(self.scales.iter().map(|s| s.scale as u8));
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        out.extend_from_slice(&(self.patch_size as u32).to_le_bytes());
        let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
        for s in &self.scales {
            s.entries.iter().flat_map(|e| e.data()).for_each(|&v| put(v));
            for p in &s.priors {
                p.ambient.iter().for_each(|&v| put(v));
                p.transmission.data.iter().for_each(|&v| put(v));
            }
        }
        let json = serde_json::to_vec(&self.metadata).expect("metadata serializes");
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a dictionary file (bad magic)".into()));
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(Error::Version { found: version, expected: VERSION });
        }
        let fingerprint: [u8; 32] = r.take(32)?.try_into().unwrap();
        let k = r.u32()? as usize;
        let n_scales = r.take(1)?[0] as usize;
        let scale_ids: Vec<usize> = r.take(n_scales)?.iter().map(|&s| s as usize).collect();
        let channels = r.u32()? as usize;
        let patch_size = r.u32()? as usize;
        let mut scales = Vec::with_capacity(n_scales);
        for &scale in &scale_ids {
            if !(1..=4).contains(&scale) {
                return Err(Error::Format(format!("scale {scale} in dictionary header")));
            }
            let side = patch_size >> scale;
            let mut entries = Vec::with_capacity(k);
            for _ in 0..k {
                let data = r.f32s(channels * side * side)?;
                entries.push(Tensor::new(vec![channels, side, side], data)?);
            }
            let mut priors = Vec::with_capacity(k);
            for _ in 0..k {
                let a = r.f32s(3)?;
                let t = r.f32s(3 * side * side)?;
                priors.push(EntryPriors { ambient: [a[0], a[1], a[2]], transmission: Planes::new(side, side, t)? });
            }
            scales.push(DictScale { scale, entries, priors });
        }
        let n = r.u32()? as usize;
        let metadata = serde_json::from_slice(r.take(n)?)?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes in dictionary", bytes.len() - r.pos)));
        }
        FeatureDictionary::new(channels, patch_size, fingerprint, scales, metadata)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Format(format!("dictionary truncated at byte {}", self.bytes.len())))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self.take(4 * n)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect())
    }
}

pub fn save_dictionary(dict: &FeatureDictionary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dict.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<FeatureDictionary> {
    let path = path.as_ref();
    FeatureDictionary::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Loads and checks that the dictionary matches the encoder's backbone.
pub fn load_for_encode(path: impl AsRef<Path>, fingerprint: &[u8; 32]) -> Result<FeatureDictionary> {
    let d = load_dictionary(path)?;
    d.check_fingerprint(fingerprint)?;
    Ok(d)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn toy_dictionary(k: usize, channels: usize, patch: usize, scales: &[usize]) -> FeatureDictionary {
        let scales = scales
            .iter()
            .map(|&s| {
                let side = patch >> s;
                DictScale {
                    scale: s,
                    entries: (0..k)
                        .map(|i| Tensor::from_fn(&[channels, side, side], |j| ((i * 31 + j * 7 + s) % 13) as f64 / 13.0 - 0.4))
                        .collect(),
                    priors: (0..k)
                        .map(|i| EntryPriors {
                            ambient: [0.1, 0.5 + 0.01 * i as f64, 0.6],
                            transmission: Planes::filled(side, side, [0.3, 0.7, 0.8]),
                        })
                        .collect(),
                }
            })
            .collect();
        FeatureDictionary::new(channels, patch, [7; 32], scales, serde_json::json!({"seed": 0})).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let d = toy_dictionary(3, 4, 64, &[2, 3, 4]);
        let bytes = d.to_bytes();
        let back = FeatureDictionary::from_bytes(&bytes).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.scale(3).unwrap().entries[1].shape(), &[4, 8, 8]);
    }

    #[test]
    fn corrupt_truncated_and_foreign_files() {
        let d = toy_dictionary(2, 2, 32, &[2]);
        let mut bytes = d.to_bytes();
        assert!(matches!(FeatureDictionary::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(FeatureDictionary::from_bytes(&bytes), Err(Error::Format(_))));
        assert!(matches!(d.check_fingerprint(&[8; 32]), Err(Error::Incompatible { .. })));
        assert!(d.check_fingerprint(&[7; 32]).is_ok());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.uwfd");
        let d = toy_dictionary(2, 3, 32, &[2, 3]);
        save_dictionary(&d, &path).unwrap();
        assert_eq!(load_dictionary(&path).unwrap(), d);
        assert!(matches!(load_for_encode(&path, &[0; 32]), Err(Error::Incompatible { .. })));
    }
}
