use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use sha2::{Digest, Sha256};

use super::graph::{Gradients, Graph};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    tensor: Tensor,
    frozen: bool,
}

/// Named parameter tensors in insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Registers a tensor under `name`, replacing the value if the name exists.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        if let Some(&id) = self.by_name.get(&name) {
            self.entries[id.0].tensor = tensor;
            return id;
        }
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.clone(), id);
        self.entries.push(Entry { name, tensor, frozen: false });
        id
    }

    /// Convolution weight `[cout, cin, k, k]` drawn from `U(-sqrt(3 / fan_in), sqrt(3 / fan_in))`.
    pub fn insert_conv(&mut self, name: &str, cout: usize, cin: usize, kernel: usize, rng: &mut impl Rng) -> ParamId {
        let bound = (3.0 / (cin * kernel * kernel) as f64).sqrt();
        let w = Tensor::from_fn(&[cout, cin, kernel, kernel], |_| rng.random_range(-bound..bound));
        self.insert(name, w)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn expect(&self, name: &str) -> ParamId {
        self.id(name).unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.entries[id.0].frozen
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.entries[id.0].frozen = frozen;
    }

    /// Freezes every parameter whose name starts with `prefix`; returns how many matched.
    pub fn freeze_prefix(&mut self, prefix: &str) -> usize {
        let mut n = 0;
        for e in self.entries.iter_mut().filter(|e| e.name.starts_with(prefix)) {
            e.frozen = true;
            n += 1;
        }
        n
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    /// SHA-256 over names and bit patterns of every parameter whose name starts with `prefix`.
    pub fn digest(&self, prefix: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        for e in self.entries.iter().filter(|e| e.name.starts_with(prefix)) {
            h.update(e.name.as_bytes());
            for v in e.tensor.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().into()
    }

    /// Rounds every value to `f32` precision so the in-memory model equals its serialized form.
    pub fn round_to_f32(&mut self) {
        for e in &mut self.entries {
            for v in e.tensor.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Copies every parameter of `other` whose name also exists here (shapes must agree).
    pub fn copy_matching(&mut self, other: &ParamStore) -> Result<usize> {
        let mut n = 0;
        for e in &other.entries {
            if let Some(id) = self.id(&e.name) {
                let dst = &mut self.entries[id.0].tensor;
                if dst.shape() != e.tensor.shape() {
                    return Err(Error::Dimension(format!(
                        "parameter {} is {:?} here but {:?} in source",
                        e.name,
                        dst.shape(),
                        e.tensor.shape()
                    )));
                }
                *dst = e.tensor.clone();
                n += 1;
            }
        }
        Ok(n)
    }

    /// Serializes as named blocks: name, rank, dims, `f32` little-endian values.
    pub fn write_blocks(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            let name = e.name.as_bytes();
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&[e.tensor.shape().len() as u8])?;
            for &d in e.tensor.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in e.tensor.data() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_blocks(r: &mut impl Read) -> Result<ParamStore> {
        let fmt = |e: std::io::Error| Error::Format(format!("truncated parameter block: {e}"));
        let mut store = ParamStore::new();
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf).map_err(fmt)?;
        let count = u32::from_le_bytes(u32buf);
        for _ in 0..count {
            let mut lenbuf = [0u8; 2];
            r.read_exact(&mut lenbuf).map_err(fmt)?;
            let mut name = vec![0u8; u16::from_le_bytes(lenbuf) as usize];
            r.read_exact(&mut name).map_err(fmt)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank).map_err(fmt)?;
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                r.read_exact(&mut u32buf).map_err(fmt)?;
                shape.push(u32::from_le_bytes(u32buf) as usize);
            }
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; 4 * n];
            r.read_exact(&mut raw).map_err(fmt)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            store.insert(name, Tensor::new(shape, data)?);
        }
        Ok(store)
    }
}

/// Accumulated parameter gradients, indexed like the store.
#[derive(Clone, Debug)]
pub struct GradBuffer {
    grads: Vec<Option<Tensor>>,
}

impl GradBuffer {
    pub fn new(store: &ParamStore) -> Self {
        GradBuffer { grads: vec![None; store.len()] }
    }

    pub fn accumulate(&mut self, graph: &Graph, grads: &Gradients) {
        for (id, g) in graph.param_grads(grads) {
            match &mut self.grads[id.0] {
                Some(acc) => acc.add_assign(g),
                slot => *slot = Some(g.clone()),
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn scale(&mut self, c: f64) {
        for g in self.grads.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= c;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().flatten().map(|g| g.dot(g)).sum::<f64>().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(Tensor::is_finite)
    }
}
