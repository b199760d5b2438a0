//! Discretized Gaussian-mixture likelihood and its differentiable rate.

use std::f64::consts::{LN_2, SQRT_2};

use crate::error::{Error, Result};
use crate::nn::{CustomOp, Graph, Tensor, Var};

pub const SIGMA_FLOOR: f64 = 1e-2;
pub const P_MIN: f64 = 1.0 / 65536.0;

/// `Phi(hi) - Phi(lo)` for `lo <= hi`, evaluated in the tail that keeps precision.
pub fn normal_mass(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        0.5 * (libm::erfc(lo / SQRT_2) - libm::erfc(hi / SQRT_2))
    } else if hi <= 0.0 {
        0.5 * (libm::erfc(-hi / SQRT_2) - libm::erfc(-lo / SQRT_2))
    } else {
        1.0 - 0.5 * (libm::erfc(-lo / SQRT_2) + libm::erfc(hi / SQRT_2))
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Mixture for a single symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmParams {
    weights: Vec<f64>,
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl GmmParams {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || scales.len() != k {
            return Err(Error::Domain("mixture needs matching, non-empty component lists".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!("mixture weights do not form a simplex (sum {total})")));
        }
        if scales.iter().any(|&s| !(s >= SIGMA_FLOOR) || !s.is_finite()) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain(format!("scales must be finite and at least {SIGMA_FLOOR}")));
        }
        Ok(GmmParams { weights, means, scales })
    }

    pub fn single(mean: f64, scale: f64) -> Result<Self> {
        GmmParams::new(vec![1.0], vec![mean], vec![scale])
    }

    /// Softmax over `logits`; scales are clamped to the floor.
    pub fn from_logits(logits: &[f64], means: &[f64], scales: &[f64]) -> Self {
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        GmmParams {
            weights: e.iter().map(|v| v / z).collect(),
            means: means.to_vec(),
            scales: scales.iter().map(|s| s.max(SIGMA_FLOOR)).collect(),
        }
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Unfloored probability mass on `[lo, hi]`.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        (0..self.weights.len())
            .map(|j| self.weights[j] * normal_mass((lo - self.means[j]) / self.scales[j], (hi - self.means[j]) / self.scales[j]))
            .sum()
    }

    /// Integer interval holding (nearly) all of the mass: `[min(mu - 8 sigma), max(mu + 8 sigma)]`.
    pub fn support(&self) -> (i64, i64) {
        let lo = (0..self.weights.len()).map(|j| self.means[j] - 8.0 * self.scales[j]).fold(f64::INFINITY, f64::min);
        let hi = (0..self.weights.len()).map(|j| self.means[j] + 8.0 * self.scales[j]).fold(f64::NEG_INFINITY, f64::max);
        (lo.floor() as i64, hi.ceil() as i64)
    }
}

/// `P(v)` for the integer bin centred on `v`, floored at [`P_MIN`].
pub fn gmm_likelihood(v: f64, params: &GmmParams) -> f64 {
    params.mass(v - 0.5, v + 0.5).max(P_MIN)
}

/// Channel-major mixture parameters for a `[B, H, W]` tensor: each of
/// `logits`, `means`, `scales` is `[k * B, H, W]` with component `j` of
/// channel `b` at channel `j * B + b`.
pub fn element_params(logits: &Tensor, means: &Tensor, scales: &Tensor, k: usize, i: usize) -> GmmParams {
    let n = logits.len() / k;
    let pick = |t: &Tensor| (0..k).map(|j| t.data()[j * n + i]).collect::<Vec<_>>();
    GmmParams::from_logits(&pick(logits), &pick(means), &pick(scales))
}

struct ElementTerms {
    p: f64,
    floored: bool,
}

fn element_terms(v: f64, w: &[f64], mu: &[f64], sigma: &[f64], m: &mut [f64]) -> ElementTerms {
    let mut p = 0.0;
    for j in 0..w.len() {
        m[j] = normal_mass((v - 0.5 - mu[j]) / sigma[j], (v + 0.5 - mu[j]) / sigma[j]);
        p += w[j] * m[j];
    }
    ElementTerms { p: p.max(P_MIN), floored: p < P_MIN }
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - mx).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

struct GmmBitsOp {
    k: usize,
}

impl CustomOp for GmmBitsOp {
    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let (v, logits, means, scales) = (inputs[0], inputs[1], inputs[2], inputs[3]);
        let k = self.k;
        let n = v.len();
        let g = grad.item();
        let mut gv = Tensor::zeros(v.shape());
        let mut gl = Tensor::zeros(logits.shape());
        let mut gm = Tensor::zeros(means.shape());
        let mut gs = Tensor::zeros(scales.shape());
        let (mut lj, mut w, mut mu, mut sg, mut m) = (vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]);
        for i in 0..n {
            for j in 0..k {
                lj[j] = logits.data()[j * n + i];
                mu[j] = means.data()[j * n + i];
                sg[j] = scales.data()[j * n + i];
            }
            softmax_into(&lj, &mut w);
            let x = v.data()[i];
            let t = element_terms(x, &w, &mu, &sg, &mut m);
            if t.floored {
                continue;
            }
            // d(-log2 p)/dp
            let dp = -g / (t.p * LN_2);
            let mut dv = 0.0;
            for j in 0..k {
                let a = (x + 0.5 - mu[j]) / sg[j];
                let b = (x - 0.5 - mu[j]) / sg[j];
                let (pa, pb) = (normal_pdf(a), normal_pdf(b));
                let d = w[j] * (pa - pb) / sg[j];
                dv += d;
                gm.data_mut()[j * n + i] = -d * dp;
                gs.data_mut()[j * n + i] = -w[j] * (a * pa - b * pb) / sg[j] * dp;
                gl.data_mut()[j * n + i] = w[j] * (m[j] - t.p) * dp;
            }
            gv.data_mut()[i] = dv * dp;
        }
        [gv, gl, gm, gs].into_iter().zip(needs).map(|(t, &need)| need.then_some(t)).collect()
    }
}

/// Total `-log2 P(v)` in bits, differentiable in every input.
///
/// `scales` must already respect [`SIGMA_FLOOR`].
pub fn gmm_bits(g: &mut Graph, v: Var, logits: Var, means: Var, scales: Var, k: usize) -> Var {
    let n = g.value(v).len();
    assert_eq!(g.value(logits).len(), k * n, "mixture parameter size mismatch");
    assert_eq!(g.value(means).len(), k * n);
    assert_eq!(g.value(scales).len(), k * n);
    let total = gmm_bits_value(g.value(v), g.value(logits), g.value(means), g.value(scales), k);
    g.custom(&[v, logits, means, scales], Tensor::scalar(total), Box::new(GmmBitsOp { k }))
}

/// Forward part of [`gmm_bits`] without a graph.
pub fn gmm_bits_value(v: &Tensor, logits: &Tensor, means: &Tensor, scales: &Tensor, k: usize) -> f64 {
    let n = v.len();
    let (mut lj, mut w, mut mu, mut sg, mut m) = (vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..k {
            lj[j] = logits.data()[j * n + i];
            mu[j] = means.data()[j * n + i];
            sg[j] = scales.data()[j * n + i];
        }
        softmax_into(&lj, &mut w);
        total -= element_terms(v.data()[i], &w, &mu, &sg, &mut m).p.log2();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_matches_quadrature() {
        // Simpson's rule on the density over [-0.5, 0.5].
        for sigma in [0.05, 0.3, 1.0, 4.0] {
            let n = 2000;
            let h = 1.0 / n as f64;
            let f = |x: f64| normal_pdf(x / sigma) / sigma;
            let mut s = f(-0.5) + f(0.5);
            for i in 1..n {
                let x = -0.5 + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
            }
            let quad = s * h / 3.0;
            let p = gmm_likelihood(0.0, &GmmParams::single(0.0, sigma).unwrap());
            assert!((p - quad).abs() < 1e-9, "sigma {sigma}: {p} vs {quad}");
        }
    }

    #[test]
    fn total_mass_and_symmetry() {
        for sigma in [0.01, 0.5, 3.0, 10.0] {
            let g = GmmParams::single(0.0, sigma).unwrap();
            let total: f64 = (-1000..=1000).map(|v| g.mass(v as f64 - 0.5, v as f64 + 0.5)).sum();
            assert!(total <= 1.0 + 1e-12 && total >= 1.0 - 1e-4, "sigma {sigma}: {total}");
            for t in 0..20 {
                let t = t as f64;
                assert!((gmm_likelihood(2.0 + t, &GmmParams::single(2.0, sigma).unwrap())
                    - gmm_likelihood(2.0 - t, &GmmParams::single(2.0, sigma).unwrap()))
                .abs()
                    < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_simplex() {
        assert!(GmmParams::new(vec![0.6, 0.6], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(GmmParams::new(vec![0.5, 0.5], vec![0.0, 1.0], vec![1.0, 1e-3]).is_err());
        assert!(GmmParams::new(vec![0.5, 0.5], vec![0.0, 1.0], vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn far_tail_is_floored() {
        let g = GmmParams::single(0.0, 0.1).unwrap();
        assert_eq!(gmm_likelihood(50.0, &g), P_MIN);
    }

    #[test]
    fn bits_gradient_matches_finite_differences() {
        let k = 3;
        let v = Tensor::from_fn(&[1, 2, 2], |i| [0.3, -1.2, 2.4, 0.9][i]);
        let logits = Tensor::from_fn(&[k, 2, 2], |i| (i as f64 * 0.7).sin());
        let means = Tensor::from_fn(&[k, 2, 2], |i| (i as f64 * 1.3).cos() * 1.5);
        let scales = Tensor::from_fn(&[k, 2, 2], |i| 0.4 + (i % 5) as f64 * 0.3);
        let inputs = [v, logits, means, scales];
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
        let out = gmm_bits(&mut g, vars[0], vars[1], vars[2], vars[3], k);
        let grads = g.backward(out);
        for (which, t) in inputs.iter().enumerate() {
            let analytic = grads.wrt(vars[which]).unwrap();
            for i in 0..t.len() {
                let eval = |d: f64| {
                    let mut ins = inputs.clone();
                    ins[which].data_mut()[i] += d;
                    gmm_bits_value(&ins[0], &ins[1], &ins[2], &ins[3], k)
                };
                let h = 1e-6;
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic.data()[i];
                assert!((fd - a).abs() <= 1e-4 * fd.abs().max(1e-3), "input {which} elt {i}: {fd} vs {a}");
            }
        }
    }
}
