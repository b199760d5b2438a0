//! Versioned parameter checkpoints: `RFCK`, version byte, length-prefixed
//! JSON configuration, then named `f32` blocks.

use std::path::Path;

use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub const MAGIC: &[u8; 4] = b"RFCK";
pub const VERSION: u8 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(config: serde_json::Value, params: ParamStore) -> Self {
        Checkpoint { config, params }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        let json = serde_json::to_vec(&self.config).expect("config serializes");
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        self.params.write_blocks(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 9 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Version { found: bytes[4], expected: VERSION });
        }
        let n = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let json = bytes.get(9..9 + n).ok_or_else(|| Error::Format("truncated checkpoint config".into()))?;
        let config = serde_json::from_slice(json)?;
        let mut rest = &bytes[9 + n..];
        let params = ParamStore::read_blocks(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after checkpoint", rest.len())));
        }
        Ok(Checkpoint { config, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn config_field<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self.config.get(key).ok_or_else(|| Error::Format(format!("checkpoint config lacks `{key}`")))?;
        Ok(serde_json::from_value(v.clone())?)
    }
}

pub fn fingerprint(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// SHA-256 of a checkpoint file's bytes.
pub fn file_fingerprint(path: impl AsRef<Path>) -> Result<[u8; 32]> {
    let path = path.as_ref();
    Ok(fingerprint(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Inverse of [`hex`] for 32-byte digests.
pub fn unhex(s: &str) -> Result<[u8; 32]> {
    if s.len() != 64 || !s.is_ascii() {
        return Err(Error::Format(format!("`{s}` is not a 64-digit hex digest")));
    }
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| Error::Format(format!("`{s}` is not hex")))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn round_trip_and_errors() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::from_fn(&[2, 3], |i| i as f64 * 0.25));
        let ck = Checkpoint::new(serde_json::json!({"lambda": 128}), p);
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.config_field::<u32>("lambda").unwrap(), 128);
        assert_eq!(back.params.digest(""), ck.params.digest(""));
        assert_eq!(back.to_bytes(), bytes);

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Version { found: 9, .. })));
        bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format(_))));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        let d = fingerprint(&bytes);
        assert_eq!(unhex(&hex(&d)).unwrap(), d);
    }
}
