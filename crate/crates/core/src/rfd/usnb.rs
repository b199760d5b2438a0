//! Style normalisation of dictionary features toward the input's water.
//!
//! One prior branch (two pointwise convolutions) maps `(T, A)` to a feature
//! space transmission `t` and ambient `a`; the same branch, with the same
//! parameters, runs on the dictionary priors and on the input priors. The
//! entry is then restored with the dictionary side and re-degraded with the
//! input side: `ND = (D - a_d (1 - t_d)) / t_d * t_i + a_i (1 - t_i)`.

use rand::Rng;

use crate::codec::layers::LEAKY_SLOPE;
use crate::error::{Error, Result};
use crate::nn::{ConvSpec, Graph, ParamStore, Tensor, Var};

/// Lower bound on the learned feature-space transmission.
pub const T_FLOOR: f64 = 0.05;

/// Transmission on a feature grid plus the ambient light.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorMaps {
    pub transmission: Tensor,
    pub ambient: [f64; 3],
}

impl PriorMaps {
    fn input_tensor(&self) -> Tensor {
        let (_, h, w) = self.transmission.chw();
        let mut data = self.transmission.data().to_vec();
        for a in self.ambient {
            data.extend(std::iter::repeat_n(a, h * w));
        }
        Tensor::new(vec![6, h, w], data).expect("six prior planes")
    }
}

fn names(scale: usize) -> [String; 2] {
    [format!("usnb.{scale}.l0"), format!("usnb.{scale}.l1")]
}

/// Parameter names of the prior branch; input and dictionary sides use the same list.
pub fn branch_param_names(scale: usize) -> Vec<String> {
    names(scale).iter().flat_map(|n| [format!("{n}.w"), format!("{n}.b")]).collect()
}

/// Near-identity initialisation: hidden units 0..6 copy `(T, A)` and channel
/// `c` of `t` (resp. `a`) reads colour `c mod 3`, plus small noise everywhere.
pub fn init_params(store: &mut ParamStore, scale: usize, channels: usize, hidden: usize, rng: &mut impl Rng) {
    assert!(hidden >= 6, "prior branch needs at least six hidden units");
    let [l0, l1] = names(scale);
    let mut noise = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-0.01..0.01)).collect() };
    let mut w0 = noise(hidden * 6);
    for i in 0..6 {
        w0[i * 6 + i] += 1.0;
    }
    let mut w1 = noise(2 * channels * hidden);
    for c in 0..channels {
        w1[c * hidden + c % 3] += 1.0;
        w1[(channels + c) * hidden + 3 + c % 3] += 1.0;
    }
    store.insert(format!("{l0}.w"), Tensor::new(vec![hidden, 6, 1, 1], w0).unwrap());
    store.insert(format!("{l0}.b"), Tensor::zeros(&[hidden]));
    store.insert(format!("{l1}.w"), Tensor::new(vec![2 * channels, hidden, 1, 1], w1).unwrap());
    store.insert(format!("{l1}.b"), Tensor::zeros(&[2 * channels]));
}

/// Overwrites the branch with the exact identity configuration.
pub fn set_identity(store: &mut ParamStore, scale: usize) {
    let [l0, l1] = names(scale);
    let w0 = store.expect(&format!("{l0}.w"));
    let hidden = store.tensor(w0).shape()[0];
    *store.tensor_mut(w0) = Tensor::from_fn(&[hidden, 6, 1, 1], |i| if i / 6 == i % 6 { 1.0 } else { 0.0 });
    let w1 = store.expect(&format!("{l1}.w"));
    let channels = store.tensor(w1).shape()[0] / 2;
    *store.tensor_mut(w1) = Tensor::from_fn(&[2 * channels, hidden, 1, 1], |i| {
        let (o, j) = (i / hidden, i % hidden);
        let src = if o < channels { o % 3 } else { 3 + (o - channels) % 3 };
        if j == src {
            1.0
        } else {
            0.0
        }
    });
    for n in [l0, l1] {
        let b = store.expect(&format!("{n}.b"));
        let len = store.tensor(b).len();
        *store.tensor_mut(b) = Tensor::zeros(&[len]);
    }
}

/// Feature-space `(t, a)` for one side.
pub fn prior_branch(g: &mut Graph, store: &ParamStore, scale: usize, priors: &PriorMaps) -> (Var, Var) {
    let [l0, l1] = names(scale);
    let x = g.constant(priors.input_tensor());
    let h = crate::codec::layers::conv(g, store, &l0, x, ConvSpec::pointwise());
    let h = g.leaky_relu(h, LEAKY_SLOPE);
    let o = crate::codec::layers::conv(g, store, &l1, h, ConvSpec::pointwise());
    let c = g.value(o).shape()[0] / 2;
    let t = g.slice_channels(o, 0, c);
    let t = g.clamp_min(t, T_FLOOR);
    let a = g.slice_channels(o, c, c);
    (t, a)
}

/// Normalises entry `d` (`[C, h, w]`) from the dictionary style to the input style.
pub fn usnb_normalize(g: &mut Graph, store: &ParamStore, scale: usize, d: Var, dict: &PriorMaps, input: &PriorMaps) -> Result<Var> {
    let (c, h, w) = g.value(d).chw();
    for p in [dict, input] {
        if p.transmission.chw() != (3, h, w) {
            return Err(Error::Dimension(format!(
                "prior grid {:?} does not match features {h}x{w}",
                p.transmission.shape()
            )));
        }
    }
    let (td, ad) = prior_branch(g, store, scale, dict);
    let (ti, ai) = prior_branch(g, store, scale, input);
    if g.value(td).chw().0 != c {
        return Err(Error::Dimension(format!("prior branch emits {} channels for {c}", g.value(td).chw().0)));
    }
    // (D - a_d (1 - t_d)) / t_d * t_i + a_i (1 - t_i)
    let one_minus_td = {
        let n = g.scale(td, -1.0);
        g.add_scalar(n, 1.0)
    };
    let haze_d = g.mul(ad, one_minus_td);
    let clear = g.sub(d, haze_d);
    let clear = g.div(clear, td);
    let one_minus_ti = {
        let n = g.scale(ti, -1.0);
        g.add_scalar(n, 1.0)
    };
    let haze_i = g.mul(ai, one_minus_ti);
    let styled = g.mul(clear, ti);
    Ok(g.add(styled, haze_i))
}
