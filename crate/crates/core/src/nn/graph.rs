//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to [`Var`] handles together
//! with its forward value. [`Graph::backward`] then walks the tape in reverse.
//! Nodes that depend on nothing trainable are skipped entirely, so frozen
//! layers and constant inputs cost nothing in the backward pass.

use std::collections::HashMap;

use super::conv::{col2im, gemm, gemm_at, gemm_bt, im2col, ConvSpec};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A differentiable operation whose forward value is computed by the caller.
pub trait CustomOp {
    /// Gradients w.r.t. each input. Entries whose `needs` flag is false may be `None`.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    Param,
    Conv { x: Var, w: Var, b: Option<Var>, spec: ConvSpec, cols: Option<Vec<f64>> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Square(Var),
    Sqrt(Var),
    Sigmoid(Var),
    Softplus(Var),
    LeakyRelu(Var, f64),
    ClampMin(Var, f64),
    Sum(Var),
    Mean(Var),
    PixelShuffle(Var),
    Concat(Vec<Var>),
    SliceChannels(Var, usize),
    Crop(Var),
    ExpandHw(Var),
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    no_grad: bool,
}

/// Result of a backward pass: one optional gradient per node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// A graph that treats every parameter as a constant (inference only).
    pub fn no_grad() -> Self {
        Graph { no_grad: true, ..Graph::default() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that collects a gradient but is not bound to a parameter.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a parameter; repeated calls within one graph return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.tensor(id).clone(), Op::Param, !self.no_grad && !store.is_frozen(id));
        self.params.insert(id, v);
        v
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Var {
        let (cin, h, wd) = self.value(x).chw();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(ws.len(), 4, "conv weight must be [cout, cin, k, k]");
        assert_eq!(ws[1], cin, "conv input has {cin} channels, weight expects {}", ws[1]);
        assert_eq!((ws[2], ws[3]), (spec.kernel, spec.kernel));
        let cout = ws[0];
        let (ho, wo) = spec.output_size(h, wd);
        let kk = cin * spec.kernel * spec.kernel;
        let p = ho * wo;
        let mut out = vec![0.0; cout * p];
        if let Some(b) = b {
            let bias = self.value(b).data();
            assert_eq!(bias.len(), cout);
            for (c, row) in out.chunks_mut(p).enumerate() {
                row.fill(bias[c]);
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        let cols = if spec.is_pointwise() {
            gemm(cout, kk, p, self.value(w).data(), self.value(x).data(), beta, &mut out);
            None
        } else {
            let cols = im2col(self.value(x).data(), cin, h, wd, spec);
            gemm(cout, kk, p, self.value(w).data(), &cols, beta, &mut out);
            Some(cols)
        };
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::new(vec![cout, ho, wo], out).expect("conv output shape");
        // im2col buffers are only needed when a gradient will flow back
        let cols = if rg { cols } else { None };
        self.push(value, Op::Conv { x, w, b, spec, cols }, rg)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let value = self.value(a).zip_map(self.value(b), f);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, Op::Div(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::Offset(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { slope * x }, Op::LeakyRelu(a, slope))
    }

    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        self.unary(a, |x| x.max(floor), Op::ClampMin(a, floor))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.sum() / t.len() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(m), Op::Mean(a), rg)
    }

    /// Depth-to-space with factor 2: `[4C, H, W] -> [C, 2H, 2W]`.
    pub fn pixel_shuffle(&mut self, a: Var) -> Var {
        let (c4, h, w) = self.value(a).chw();
        assert_eq!(c4 % 4, 0, "pixel shuffle needs a multiple of 4 channels");
        let c = c4 / 4;
        let src = self.value(a).data();
        let mut out = vec![0.0; c4 * h * w];
        for ch in 0..c {
            for i in 0..2 {
                for j in 0..2 {
                    let plane = &src[((ch * 4 + i * 2 + j) * h) * w..((ch * 4 + i * 2 + j + 1) * h) * w];
                    for y in 0..h {
                        for x in 0..w {
                            out[(ch * 2 * h + 2 * y + i) * 2 * w + 2 * x + j] = plane[y * w + x];
                        }
                    }
                }
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::new(vec![c, 2 * h, 2 * w], out).unwrap(), Op::PixelShuffle(a), rg)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let (_, h, w) = self.value(parts[0]).chw();
        let mut data = Vec::new();
        let mut c = 0;
        for &p in parts {
            let (pc, ph, pw) = self.value(p).chw();
            assert_eq!((ph, pw), (h, w), "concat spatial mismatch");
            c += pc;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::new(vec![c, h, w], data).unwrap(), Op::Concat(parts.to_vec()), rg)
    }

    pub fn slice_channels(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice_channels(start, len);
        let rg = self.rg(a);
        self.push(value, Op::SliceChannels(a, start), rg)
    }

    /// Keeps the top-left `height x width` window.
    pub fn crop(&mut self, a: Var, height: usize, width: usize) -> Var {
        let (c, h, w) = self.value(a).chw();
        assert!(height <= h && width <= w, "crop larger than input");
        if (height, width) == (h, w) {
            return a;
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(c * height * width);
        for ch in 0..c {
            for y in 0..height {
                data.extend_from_slice(&src[(ch * h + y) * w..(ch * h + y) * w + width]);
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::new(vec![c, height, width], data).unwrap(), Op::Crop(a), rg)
    }

    /// Broadcasts a `[C, 1, 1]` tensor over `[C, height, width]`.
    pub fn expand_hw(&mut self, a: Var, height: usize, width: usize) -> Var {
        let (c, h, w) = self.value(a).chw();
        assert_eq!((h, w), (1, 1), "expand_hw needs a [C, 1, 1] input");
        let src = self.value(a).data();
        let data = (0..c).flat_map(|ch| std::iter::repeat_n(src[ch], height * width)).collect();
        let rg = self.rg(a);
        self.push(Tensor::new(vec![c, height, width], data).unwrap(), Op::ExpandHw(a), rg)
    }

    pub fn custom(&mut self, inputs: &[Var], value: Tensor, op: Box<dyn CustomOp>) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(value, Op::Custom { inputs: inputs.to_vec(), op }, rg)
    }

    /// Reverse pass from a scalar `root` (seeded with gradient 1).
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.value(root).shape(), 1.0));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Conv { x, w, b, spec, cols } => {
                let (cin, h, wd) = val(*x).chw();
                let cout = node.value.shape()[0];
                let p = node.value.len() / cout;
                let kk = cin * spec.kernel * spec.kernel;
                let cols_ref: &[f64] = match cols {
                    Some(c) => c,
                    None => val(*x).data(),
                };
                if self.rg(*w) {
                    let mut gw = vec![0.0; cout * kk];
                    gemm_bt(cout, p, kk, g.data(), cols_ref, 0.0, &mut gw);
                    self.accumulate(grads, *w, Tensor::new(val(*w).shape().to_vec(), gw).unwrap());
                }
                if let Some(b) = b {
                    if self.rg(*b) {
                        let gb = g.data().chunks(p).map(|r| r.iter().sum()).collect();
                        self.accumulate(grads, *b, Tensor::new(vec![cout], gb).unwrap());
                    }
                }
                if self.rg(*x) {
                    let mut gcols = vec![0.0; kk * p];
                    gemm_at(kk, cout, p, val(*w).data(), g.data(), 0.0, &mut gcols);
                    let gx = if spec.is_pointwise() { gcols } else { col2im(&gcols, cin, h, wd, *spec) };
                    self.accumulate(grads, *x, Tensor::new(vec![cin, h, wd], gx).unwrap());
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.zip_map(val(*b), |g, y| g * y));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, g.zip_map(val(*a), |g, x| g * x));
                }
            }
            Op::Div(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.zip_map(val(*b), |g, y| g / y));
                }
                if self.rg(*b) {
                    let t = g.zip_map(&node.value, |g, q| g * q);
                    self.accumulate(grads, *b, t.zip_map(val(*b), |t, y| -t / y));
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.map(|x| x * c)),
            Op::Offset(a) => self.accumulate(grads, *a, g.clone()),
            Op::Square(a) => self.accumulate(grads, *a, g.zip_map(val(*a), |g, x| 2.0 * x * g)),
            Op::Sqrt(a) => self.accumulate(grads, *a, g.zip_map(&node.value, |g, s| g / (2.0 * s))),
            Op::Sigmoid(a) => self.accumulate(grads, *a, g.zip_map(&node.value, |g, s| g * s * (1.0 - s))),
            Op::Softplus(a) => self.accumulate(grads, *a, g.zip_map(val(*a), |g, x| g * sigmoid(x))),
            Op::LeakyRelu(a, slope) => {
                self.accumulate(grads, *a, g.zip_map(val(*a), |g, x| if x > 0.0 { g } else { g * slope }))
            }
            Op::ClampMin(a, floor) => {
                self.accumulate(grads, *a, g.zip_map(val(*a), |g, x| if x > *floor { g } else { 0.0 }))
            }
            Op::Sum(a) => self.accumulate(grads, *a, Tensor::full(val(*a).shape(), g.item())),
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                self.accumulate(grads, *a, Tensor::full(val(*a).shape(), g.item() / n))
            }
            Op::PixelShuffle(a) => {
                let (c4, h, w) = val(*a).chw();
                let c = c4 / 4;
                let gd = g.data();
                let mut out = vec![0.0; c4 * h * w];
                for ch in 0..c {
                    for i in 0..2 {
                        for j in 0..2 {
                            let base = (ch * 4 + i * 2 + j) * h * w;
                            for y in 0..h {
                                for x in 0..w {
                                    out[base + y * w + x] = gd[(ch * 2 * h + 2 * y + i) * 2 * w + 2 * x + j];
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *a, Tensor::new(vec![c4, h, w], out).unwrap());
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let c = val(p).shape()[0];
                    if self.rg(p) {
                        self.accumulate(grads, p, g.slice_channels(start, c));
                    }
                    start += c;
                }
            }
            Op::SliceChannels(a, start) => {
                if self.rg(*a) {
                    let (_, h, w) = val(*a).chw();
                    let mut full = Tensor::zeros(val(*a).shape());
                    let off = start * h * w;
                    full.data_mut()[off..off + g.len()].copy_from_slice(g.data());
                    self.accumulate(grads, *a, full);
                }
            }
            Op::Crop(a) => {
                let (c, h, w) = val(*a).chw();
                let (_, ch, cw) = g.chw();
                let mut full = Tensor::zeros(&[c, h, w]);
                for k in 0..c {
                    for y in 0..ch {
                        full.data_mut()[(k * h + y) * w..(k * h + y) * w + cw]
                            .copy_from_slice(&g.data()[(k * ch + y) * cw..(k * ch + y + 1) * cw]);
                    }
                }
                self.accumulate(grads, *a, full);
            }
            Op::ExpandHw(a) => {
                let c = val(*a).shape()[0];
                let plane = g.len() / c;
                let data = g.data().chunks(plane).map(|r| r.iter().sum()).collect();
                self.accumulate(grads, *a, Tensor::new(vec![c, 1, 1], data).unwrap());
            }
            Op::Custom { inputs, op } => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&v| val(v)).collect();
                let needs: Vec<bool> = inputs.iter().map(|&v| self.rg(v)).collect();
                for (v, gi) in inputs.iter().zip(op.backward(&ins, &node.value, g, &needs)) {
                    if let Some(gi) = gi {
                        self.accumulate(grads, *v, gi);
                    }
                }
            }
        }
    }

    /// Gradients of every bound, trainable parameter.
    pub fn param_grads<'a>(&'a self, grads: &'a Gradients) -> impl Iterator<Item = (ParamId, &'a Tensor)> + 'a {
        self.params.iter().filter_map(move |(&id, &v)| grads.wrt(v).map(|g| (id, g)))
    }
}
