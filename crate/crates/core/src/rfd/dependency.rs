//! Dependency map between input features and a reference: three dilated 3x3
//! branches (rates 1, 2, 4) over their concatenation, fused by a pointwise
//! convolution to `G` groups and squashed into `(0, 1)`.

use rand::Rng;

use crate::codec::layers::{conv, init_conv, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::nn::{ConvSpec, Graph, ParamStore, Tensor, Var};

pub const RATES: [usize; 3] = [1, 2, 4];
/// Initial fused bias: `sigmoid(3) ~ 0.95`, close to passing the reference through.
pub const FUSE_BIAS: f64 = 3.0;

/// Quantised level of the initial (constant) map.
pub fn initial_level(levels: f64) -> f64 {
    (levels / (1.0 + (-FUSE_BIAS).exp())).round()
}

pub fn init_params(store: &mut ParamStore, scale: usize, channels: usize, hidden: usize, groups: usize, rng: &mut impl Rng) {
    for r in RATES {
        init_conv(store, &format!("rfvm.{scale}.d{r}"), hidden, 2 * channels, 3, rng);
    }
    let fuse = format!("rfvm.{scale}.fuse");
    init_conv(store, &fuse, groups, 3 * hidden, 1, rng);
    // zero weights: the map starts constant, so it costs almost nothing to send
    let w = store.expect(&format!("{fuse}.w"));
    *store.tensor_mut(w) = Tensor::zeros(&[groups, 3 * hidden, 1, 1]);
    let b = store.expect(&format!("{fuse}.b"));
    *store.tensor_mut(b) = Tensor::full(&[groups], FUSE_BIAS);
}

/// `W = sigmoid(fuse([branch_1, branch_2, branch_4]))`, shape `[G, h, w]`.
pub fn compute_dependency(g: &mut Graph, store: &ParamStore, scale: usize, features: Var, reference: Var) -> Result<Var> {
    if g.value(features).shape() != g.value(reference).shape() {
        return Err(Error::Dimension(format!(
            "features {:?} and reference {:?} differ",
            g.value(features).shape(),
            g.value(reference).shape()
        )));
    }
    let x = g.concat(&[features, reference]);
    let branches: Vec<Var> = RATES
        .iter()
        .map(|&r| {
            let b = conv(g, store, &format!("rfvm.{scale}.d{r}"), x, ConvSpec::same(3, 1, r));
            g.leaky_relu(b, LEAKY_SLOPE)
        })
        .collect();
    let cat = g.concat(&branches);
    let logits = conv(g, store, &format!("rfvm.{scale}.fuse"), cat, ConvSpec::pointwise());
    Ok(g.sigmoid(logits))
}
