//! Parameterised layers expressed on the autodiff graph.

use rand::Rng;

use crate::nn::{ConvSpec, Graph, ParamStore, Tensor, Var};

pub const LEAKY_SLOPE: f64 = 0.1;

// softplus(G_DIAG) = 0.1, softplus(BETA_INIT) = 1.0
const G_DIAG: f64 = -2.2522;
const G_OFF: f64 = -5.0;
const BETA_INIT: f64 = 0.5413;

pub fn init_conv(store: &mut ParamStore, name: &str, cout: usize, cin: usize, kernel: usize, rng: &mut impl Rng) {
    store.insert_conv(&format!("{name}.w"), cout, cin, kernel, rng);
    store.insert(format!("{name}.b"), Tensor::zeros(&[cout]));
}

pub fn init_gdn(store: &mut ParamStore, name: &str, channels: usize) {
    let gamma = Tensor::from_fn(&[channels, channels, 1, 1], |i| if i / channels == i % channels { G_DIAG } else { G_OFF });
    store.insert(format!("{name}.gamma"), gamma);
    store.insert(format!("{name}.beta"), Tensor::full(&[channels], BETA_INIT));
}

pub fn conv(g: &mut Graph, store: &ParamStore, name: &str, x: Var, spec: ConvSpec) -> Var {
    let w = g.param(store, store.expect(&format!("{name}.w")));
    let b = g.param(store, store.expect(&format!("{name}.b")));
    g.conv2d(x, w, Some(b), spec)
}

/// `x / sqrt(beta + gamma * x^2)`, or `x * sqrt(...)` when `inverse`.
pub fn gdn(g: &mut Graph, store: &ParamStore, name: &str, x: Var, inverse: bool) -> Var {
    let gr = g.param(store, store.expect(&format!("{name}.gamma")));
    let br = g.param(store, store.expect(&format!("{name}.beta")));
    let gamma = g.softplus(gr);
    let beta = g.softplus(br);
    let sq = g.square(x);
    let norm = g.conv2d(sq, gamma, Some(beta), ConvSpec::pointwise());
    let s = g.sqrt(norm);
    if inverse {
        g.mul(x, s)
    } else {
        g.div(x, s)
    }
}

/// Conv producing `4 * cout` channels followed by depth-to-space.
pub fn upconv(g: &mut Graph, store: &ParamStore, name: &str, x: Var) -> Var {
    let y = conv(g, store, name, x, ConvSpec::same(3, 1, 1));
    g.pixel_shuffle(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gdn_init_constants() {
        let sp = |x: f64| (1.0 + x.exp()).ln();
        assert!((sp(G_DIAG) - 0.1).abs() < 1e-4);
        assert!((sp(BETA_INIT) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn gdn_forward_on_single_channel() {
        let mut store = ParamStore::new();
        init_gdn(&mut store, "n", 1);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[1, 1, 1], 2.0));
        let y = gdn(&mut g, &store, "n", x, false);
        let z = gdn(&mut g, &store, "n", x, true);
        let d = (1.0 + 0.1 * 4.0f64).sqrt();
        assert!((g.value(y).item() - 2.0 / d).abs() < 1e-3);
        assert!((g.value(z).item() - 2.0 * d).abs() < 1e-3);
    }
}
