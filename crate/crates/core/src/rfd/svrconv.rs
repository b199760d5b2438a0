//! Spatially variant recursive filtering.
//!
//! Four directional scans (left to right, right to left, top to bottom,
//! bottom to top) each run `h[t] = w[t] * x[t] + (1 - w[t]) * h[t-1]` from a
//! zero boundary state; the output is their mean. Channel `c` of `x` reads
//! weight group `c * G / C`.

use crate::nn::{CustomOp, Graph, Tensor, Var};

pub const DIRECTIONS: usize = 4;

/// Spatial offset of step `t` on scan line `line` for direction `dir`.
#[inline]
fn position(dir: usize, h: usize, w: usize, line: usize, t: usize) -> usize {
    match dir {
        0 => line * w + t,
        1 => line * w + (w - 1 - t),
        2 => t * w + line,
        _ => (h - 1 - t) * w + line,
    }
}

#[inline]
fn extent(dir: usize, h: usize, w: usize) -> (usize, usize) {
    if dir < 2 {
        (h, w)
    } else {
        (w, h)
    }
}

fn group_of(c: usize, channels: usize, groups: usize) -> usize {
    c * groups / channels
}

fn check(x: &Tensor, w: &Tensor) -> (usize, usize, usize, usize) {
    let (c, h, wd) = x.chw();
    let (g, gh, gw) = w.chw();
    assert!((gh, gw) == (h, wd), "weight map {gh}x{gw} against features {h}x{wd}");
    assert!(g >= 1 && g <= c && c % g == 0, "{g} weight groups for {c} channels");
    (c, h, wd, g)
}

/// Forward value without a graph.
pub fn svr_forward(x: &Tensor, w: &Tensor) -> Tensor {
    let (c, h, wd, g) = check(x, w);
    let hw = h * wd;
    let mut out = Tensor::zeros(x.shape());
    let (xd, wdta) = (x.data(), w.data());
    let od = out.data_mut();
    for ch in 0..c {
        let xo = ch * hw;
        let wo = group_of(ch, c, g) * hw;
        for dir in 0..DIRECTIONS {
            let (lines, len) = extent(dir, h, wd);
            for line in 0..lines {
                let mut state = 0.0;
                for t in 0..len {
                    let p = position(dir, h, wd, line, t);
                    let a = wdta[wo + p];
                    state = a * xd[xo + p] + (1.0 - a) * state;
                    od[xo + p] += 0.25 * state;
                }
            }
        }
    }
    out
}

struct SvrOp;

impl CustomOp for SvrOp {
    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let (x, w) = (inputs[0], inputs[1]);
        let (c, h, wd, g) = check(x, w);
        let hw = h * wd;
        let mut gx = Tensor::zeros(x.shape());
        let mut gw = Tensor::zeros(w.shape());
        let (xd, wdta, gd) = (x.data(), w.data(), grad.data());
        let mut states = vec![0.0; h.max(wd)];
        for ch in 0..c {
            let xo = ch * hw;
            let wo = group_of(ch, c, g) * hw;
            for dir in 0..DIRECTIONS {
                let (lines, len) = extent(dir, h, wd);
                for line in 0..lines {
                    let mut state = 0.0;
                    for t in 0..len {
                        let p = position(dir, h, wd, line, t);
                        let a = wdta[wo + p];
                        state = a * xd[xo + p] + (1.0 - a) * state;
                        states[t] = state;
                    }
                    let mut carry = 0.0;
                    for t in (0..len).rev() {
                        let p = position(dir, h, wd, line, t);
                        let a = wdta[wo + p];
                        let acc = 0.25 * gd[xo + p] + carry;
                        let prev = if t > 0 { states[t - 1] } else { 0.0 };
                        gx.data_mut()[xo + p] += acc * a;
                        gw.data_mut()[wo + p] += acc * (xd[xo + p] - prev);
                        carry = acc * (1.0 - a);
                    }
                }
            }
        }
        vec![needs[0].then_some(gx), needs[1].then_some(gw)]
    }
}

/// `x`: `[C, H, W]` reference features, `w`: `[G, H, W]` weights.
pub fn svrconv(g: &mut Graph, x: Var, w: Var) -> Var {
    let value = svr_forward(g.value(x), g.value(w));
    g.custom(&[x, w], value, Box::new(SvrOp))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_of_four_matches_unrolled_recursion() {
        let xs = [0.3, -1.2, 2.0, 0.7];
        let ws = [0.9, 0.4, 0.25, 0.6];
        let x = Tensor::new(vec![1, 1, 4], xs.to_vec()).unwrap();
        let w = Tensor::new(vec![1, 1, 4], ws.to_vec()).unwrap();
        let l0 = ws[0] * xs[0];
        let l1 = ws[1] * xs[1] + (1.0 - ws[1]) * l0;
        let l2 = ws[2] * xs[2] + (1.0 - ws[2]) * l1;
        let l3 = ws[3] * xs[3] + (1.0 - ws[3]) * l2;
        let r3 = ws[3] * xs[3];
        let r2 = ws[2] * xs[2] + (1.0 - ws[2]) * r3;
        let r1 = ws[1] * xs[1] + (1.0 - ws[1]) * r2;
        let r0 = ws[0] * xs[0] + (1.0 - ws[0]) * r1;
        // vertical scans over a single row see one step each
        let expected = [
            (l0 + r0 + 2.0 * ws[0] * xs[0]) / 4.0,
            (l1 + r1 + 2.0 * ws[1] * xs[1]) / 4.0,
            (l2 + r2 + 2.0 * ws[2] * xs[2]) / 4.0,
            (l3 + r3 + 2.0 * ws[3] * xs[3]) / 4.0,
        ];
        let out = svr_forward(&x, &w);
        for (o, e) in out.data().iter().zip(expected) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_weights_pass_through_and_single_pixel() {
        let x = Tensor::from_fn(&[4, 3, 5], |i| (i as f64 * 0.37).sin());
        let ones = Tensor::full(&[2, 3, 5], 1.0);
        assert_eq!(svr_forward(&x, &ones), x);
        let px = Tensor::new(vec![2, 1, 1], vec![2.0, -1.0]).unwrap();
        let w = Tensor::full(&[1, 1, 1], 0.3);
        let out = svr_forward(&px, &w);
        assert!((out.data()[0] - 0.6).abs() < 1e-15 && (out.data()[1] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x0 = Tensor::from_fn(&[4, 3, 4], |i| ((i * 7) % 11) as f64 / 5.0 - 1.0);
        let w0 = Tensor::from_fn(&[2, 3, 4], |i| 0.1 + 0.8 * ((i * 5) % 9) as f64 / 8.0);
        let probe = Tensor::from_fn(&[4, 3, 4], |i| ((i * 3) % 7) as f64 - 3.0);
        let loss = |x: &Tensor, w: &Tensor| svr_forward(x, w).dot(&probe);
        let mut g = Graph::new();
        let xv = g.variable(x0.clone());
        let wv = g.variable(w0.clone());
        let y = svrconv(&mut g, xv, wv);
        let pv = g.constant(probe.clone());
        let prod = g.mul(y, pv);
        let l = g.sum(prod);
        let grads = g.backward(l);
        let eps = 1e-6;
        for (var, base, is_x) in [(xv, &x0, true), (wv, &w0, false)] {
            let analytic = grads.wrt(var).unwrap();
            for i in 0..base.len() {
                let mut plus = base.clone();
                plus.data_mut()[i] += eps;
                let mut minus = base.clone();
                minus.data_mut()[i] -= eps;
                let fd = if is_x {
                    (loss(&plus, &w0) - loss(&minus, &w0)) / (2.0 * eps)
                } else {
                    (loss(&x0, &plus) - loss(&x0, &minus)) / (2.0 * eps)
                };
                assert!((fd - analytic.data()[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{fd} vs {}", analytic.data()[i]);
            }
        }
    }
}
