//! RGB image containers.
//!
//! Pixels are stored planar (`c`, `y`, `x`) as `f64`. [`Planes`] carries no
//! range invariant and is used for intermediate results; [`Image`] is the
//! validated codec unit with every value finite and inside `[0, 1]`.

use std::path::Path;

use crate::error::{Error, Result};

/// Three planes of `height * width` unconstrained values.
#[derive(Clone, Debug, PartialEq)]
pub struct Planes {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Planes {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!("empty planes {height}x{width}")));
        }
        if data.len() != 3 * height * width {
            return Err(Error::Dimension(format!(
                "expected {} values for 3x{height}x{width}, got {}",
                3 * height * width,
                data.len()
            )));
        }
        Ok(Planes { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: [f64; 3]) -> Self {
        let plane = height * width;
        let mut data = Vec::with_capacity(3 * plane);
        for v in value {
            data.extend(std::iter::repeat_n(v, plane));
        }
        Planes { height, width, data }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(3 * height * width);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Planes { height, width, data }
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Planes) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn clamp01(mut self) -> Planes {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    pub fn max_abs_diff(&self, other: &Planes) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Crops the rectangle starting at (`top`, `left`).
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Planes> {
        if top + height > self.height || left + width > self.width || height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "crop {height}x{width}+{top}+{left} outside {}x{}",
                self.height, self.width
            )));
        }
        Ok(Planes::from_fn(height, width, |c, y, x| self.get(c, top + y, left + x)))
    }

    pub fn flip_horizontal(&self) -> Planes {
        Planes::from_fn(self.height, self.width, |c, y, x| self.get(c, y, self.width - 1 - x))
    }

    pub fn transpose(&self) -> Planes {
        Planes::from_fn(self.width, self.height, |c, y, x| self.get(c, x, y))
    }

    /// Replicates the last row/column to reach the requested size.
    pub fn pad_replicate(&self, height: usize, width: usize) -> Planes {
        Planes::from_fn(height, width, |c, y, x| {
            self.get(c, y.min(self.height - 1), x.min(self.width - 1))
        })
    }

    /// Mean over `factor x factor` blocks; the trailing partial blocks average what they cover.
    pub fn avg_pool(&self, factor: usize) -> Planes {
        let oh = self.height.div_ceil(factor);
        let ow = self.width.div_ceil(factor);
        Planes::from_fn(oh, ow, |c, y, x| {
            let (y0, x0) = (y * factor, x * factor);
            let (y1, x1) = ((y0 + factor).min(self.height), (x0 + factor).min(self.width));
            let mut s = 0.0;
            for yy in y0..y1 {
                for xx in x0..x1 {
                    s += self.get(c, yy, xx);
                }
            }
            s / ((y1 - y0) * (x1 - x0)) as f64
        })
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&self, factor: usize) -> Planes {
        Planes::from_fn(self.height * factor, self.width * factor, |c, y, x| {
            self.get(c, y / factor, x / factor)
        })
    }

    pub fn channel_mean(&self) -> [f64; 3] {
        let n = (self.height * self.width) as f64;
        let mut m = [0.0; 3];
        for (c, slot) in m.iter_mut().enumerate() {
            *slot = self.plane(c).iter().sum::<f64>() / n;
        }
        m
    }
}

/// A validated RGB image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    planes: Planes,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Image::try_from(Planes::new(height, width, data)?)
    }

    /// Clamps into `[0, 1]`; non-finite values are rejected.
    pub fn clamped(planes: Planes) -> Result<Self> {
        if let Some(i) = planes.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite pixel at index {i}")));
        }
        Ok(Image { planes: planes.clamp01() })
    }

    pub fn filled(height: usize, width: usize, value: [f64; 3]) -> Result<Self> {
        Image::try_from(Planes::filled(height, width, value))
    }

    pub fn from_fn(height: usize, width: usize, f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        Image::try_from(Planes::from_fn(height, width, f))
    }

    pub fn height(&self) -> usize {
        self.planes.height
    }

    pub fn width(&self) -> usize {
        self.planes.width
    }

    pub fn pixels(&self) -> usize {
        self.planes.height * self.planes.width
    }

    pub fn planes(&self) -> &Planes {
        &self.planes
    }

    pub fn into_planes(self) -> Planes {
        self.planes
    }

    pub fn data(&self) -> &[f64] {
        &self.planes.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.planes.get(c, y, x)
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        Ok(Image { planes: self.planes.crop(top, left, height, width)? })
    }

    pub fn flip_horizontal(&self) -> Image {
        Image { planes: self.planes.flip_horizontal() }
    }

    pub fn transpose(&self) -> Image {
        Image { planes: self.planes.transpose() }
    }

    /// BT.601 luma plane.
    pub fn luma(&self) -> Vec<f64> {
        let (r, g, b) = (self.planes.plane(0), self.planes.plane(1), self.planes.plane(2));
        r.iter()
            .zip(g)
            .zip(b)
            .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Image> {
        let img = image::open(path.as_ref())?.into_rgb32f();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let raw = img.into_raw();
        Image::clamped(Planes::from_fn(h, w, |c, y, x| raw[(y * w + x) * 3 + c] as f64))
    }

    /// Writes an 8-bit RGB PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let (h, w) = (self.height(), self.width());
        let mut buf = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    buf.push((self.get(c, y, x) * 255.0).round() as u8);
                }
            }
        }
        image::save_buffer(path.as_ref(), &buf, w as u32, h as u32, image::ExtendedColorType::Rgb8)?;
        Ok(())
    }

    /// Rounds every value to the nearest 8-bit level, as a PNG round-trip would.
    pub fn quantize_8bit(&self) -> Image {
        let mut planes = self.planes.clone();
        for v in &mut planes.data {
            *v = (*v * 255.0).round() / 255.0;
        }
        Image { planes }
    }
}

impl TryFrom<Planes> for Image {
    type Error = Error;

    fn try_from(planes: Planes) -> Result<Self> {
        if let Some(i) = planes.data.iter().position(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!(
                "pixel {} at index {i} outside [0, 1]",
                planes.data[i]
            )));
        }
        Ok(Image { planes })
    }
}

impl AsRef<Planes> for Image {
    fn as_ref(&self) -> &Planes {
        &self.planes
    }
}

impl AsRef<Planes> for Planes {
    fn as_ref(&self) -> &Planes {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(Image::new(1, 1, vec![0.5, 1.2, 0.0]).is_err());
        assert!(Image::new(1, 1, vec![0.5, f64::NAN, 0.0]).is_err());
        assert!(Image::new(1, 2, vec![0.5; 3]).is_err());
    }

    #[test]
    fn avg_pool_handles_partial_blocks() {
        let p = Planes::from_fn(3, 3, |_, y, x| (y * 3 + x) as f64);
        let q = p.avg_pool(2);
        assert_eq!((q.height, q.width), (2, 2));
        assert_eq!(q.get(0, 0, 0), (0.0 + 1.0 + 3.0 + 4.0) / 4.0);
        assert_eq!(q.get(0, 1, 1), 8.0);
    }

    #[test]
    fn png_round_trip_is_8bit_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = Image::from_fn(5, 7, |c, y, x| ((c + 2 * y + 3 * x) % 11) as f64 / 10.0).unwrap();
        img.save_png(&path).unwrap();
        let back = Image::load(&path).unwrap();
        assert!(back.planes().max_abs_diff(img.quantize_8bit().planes()) < 1e-6);
    }
}
