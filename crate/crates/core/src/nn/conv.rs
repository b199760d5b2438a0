//! 2-D convolution kernels via im2col and `dgemm`.

/// Geometry of a square-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvSpec {
    /// Resolution-preserving (or halving, for stride 2) zero padding.
    pub fn same(kernel: usize, stride: usize, dilation: usize) -> Self {
        ConvSpec { kernel, stride, padding: dilation * (kernel - 1) / 2, dilation }
    }

    pub fn pointwise() -> Self {
        ConvSpec { kernel: 1, stride: 1, padding: 0, dilation: 1 }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let span = self.dilation * (self.kernel - 1) + 1;
        let f = |n: usize| (n + 2 * self.padding).saturating_sub(span) / self.stride + 1;
        (f(h), f(w))
    }

    pub(crate) fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

/// `c[m x n] = a[m x k] * b[k x n] + beta * c`, all row-major and contiguous.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: slice lengths checked above; strides describe contiguous row-major storage.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            beta, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c[m x n] = a[m x k] * b[n x k]^T + beta * c`.
pub(crate) fn gemm_bt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    // SAFETY: as in `gemm`; `b` is read transposed through its strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            beta, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c[m x n] = a[k x m]^T * b[k x n] + beta * c`.
pub(crate) fn gemm_at(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: as in `gemm`; `a` is read transposed through its strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            beta, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Unfolds `x[cin, h, w]` into `[cin * k * k, ho * wo]`.
pub(crate) fn im2col(x: &[f64], cin: usize, h: usize, w: usize, spec: ConvSpec) -> Vec<f64> {
    let (ho, wo) = spec.output_size(h, w);
    let k = spec.kernel;
    let mut cols = vec![0.0; cin * k * k * ho * wo];
    for ci in 0..cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let out = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * spec.stride + ky * spec.dilation) as isize - spec.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * spec.stride + kx * spec.dilation) as isize - spec.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            out[oy * wo + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters columns back onto `[cin, h, w]`.
pub(crate) fn col2im(cols: &[f64], cin: usize, h: usize, w: usize, spec: ConvSpec) -> Vec<f64> {
    let (ho, wo) = spec.output_size(h, w);
    let k = spec.kernel;
    let mut x = vec![0.0; cin * h * w];
    for ci in 0..cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * spec.stride + ky * spec.dilation) as isize - spec.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * spec.stride + kx * spec.dilation) as isize - spec.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
    x
}
