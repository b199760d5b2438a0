use crate::error::{Error, Result};
use crate::image::Planes;

/// Dense row-major `f64` tensor. Feature maps use the `[channels, height, width]` layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![], data: vec![value] }
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// `(channels, height, width)` of a rank-3 tensor.
    pub fn chw(&self) -> (usize, usize, usize) {
        assert_eq!(self.shape.len(), 3, "expected a [C, H, W] tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1], self.shape[2])
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Dimension(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "elementwise shape mismatch");
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "accumulate shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Channels `[start, start + len)` of a `[C, H, W]` tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Tensor {
        let (_, h, w) = self.chw();
        let plane = h * w;
        Tensor {
            shape: vec![len, h, w],
            data: self.data[start * plane..(start + len) * plane].to_vec(),
        }
    }

    /// Periodically repeats a `[C, h, w]` tensor to cover `[C, height, width]`.
    pub fn tile_to(&self, height: usize, width: usize) -> Tensor {
        let (c, h, w) = self.chw();
        if (h, w) == (height, width) {
            return self.clone();
        }
        let mut data = Vec::with_capacity(c * height * width);
        for ch in 0..c {
            for y in 0..height {
                let row = (ch * h + y % h) * w;
                data.extend((0..width).map(|x| self.data[row + x % w]));
            }
        }
        Tensor { shape: vec![c, height, width], data }
    }

    /// Shifts a `[C, H, W]` tensor by (`dy`, `dx`) filling vacated cells with zero.
    pub fn shifted(&self, dy: isize, dx: isize) -> Tensor {
        let (c, h, w) = self.chw();
        let mut out = Tensor::zeros(&[c, h, w]);
        for ch in 0..c {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let (sy, sx) = (y - dy, x - dx);
                    if sy >= 0 && sx >= 0 && sy < h as isize && sx < w as isize {
                        out.data[(ch * h + y as usize) * w + x as usize] =
                            self.data[(ch * h + sy as usize) * w + sx as usize];
                    }
                }
            }
        }
        out
    }
}

impl From<&Planes> for Tensor {
    fn from(p: &Planes) -> Tensor {
        Tensor { shape: vec![3, p.height, p.width], data: p.data.clone() }
    }
}

impl Tensor {
    /// Three-channel tensor as image planes (no range check).
    pub fn to_planes(&self) -> Result<Planes> {
        let (c, h, w) = self.chw();
        if c != 3 {
            return Err(Error::Dimension(format!("expected 3 channels, got {c}")));
        }
        Planes::new(h, w, self.data.clone())
    }
}
