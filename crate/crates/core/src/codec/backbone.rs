//! Hyperprior backbone: four stride-2 analysis stages with GDN, a mirrored
//! synthesis path and a hyper-latent that predicts mixture parameters for
//! the bottleneck.
//!
//! Parameter names: `front.{0,1}` (the two stages shared with the
//! dictionary and frozen during reference training), `analysis.{2,3}`,
//! `analysis.proj`, `synthesis.*`, `hyper.*`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{self, Checkpoint};
use super::gmm::SIGMA_FLOOR;
use super::layers::{conv, gdn, init_conv, init_gdn, upconv, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::image::{Image, Planes};
use crate::nn::{ConvSpec, Graph, ParamStore, Tensor, Var};

pub const FRONT_PREFIX: &str = "front.";
pub const STAGES: usize = 4;
/// Total down-sampling of the bottleneck.
pub const LATENT_STRIDE: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub channels: usize,
    pub bottleneck: usize,
    pub hyper_channels: usize,
    pub gmm_components: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig { channels: 192, bottleneck: 64, hyper_channels: 64, gmm_components: 3 }
    }
}

impl BackboneConfig {
    /// Small widths for CPU experiments.
    pub fn toy() -> Self {
        BackboneConfig { channels: 16, bottleneck: 8, hyper_channels: 8, gmm_components: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bottleneck == 0 || self.channels < self.bottleneck || self.hyper_channels == 0 || self.gmm_components == 0 {
            return Err(Error::Configuration(format!("invalid backbone widths {self:?}")));
        }
        Ok(())
    }
}

fn stage_name(i: usize) -> String {
    if i < 2 {
        format!("front.{i}")
    } else {
        format!("analysis.{i}")
    }
}

/// Registers every backbone parameter with a fresh random initialisation.
pub fn init_params(cfg: &BackboneConfig, store: &mut ParamStore, rng: &mut impl Rng) {
    let (c, m, hc, k) = (cfg.channels, cfg.bottleneck, cfg.hyper_channels, cfg.gmm_components);
    for i in 0..STAGES {
        let name = stage_name(i);
        init_conv(store, &format!("{name}.conv"), c, if i == 0 { 3 } else { c }, 5, rng);
        init_gdn(store, &format!("{name}.gdn"), c);
    }
    init_conv(store, "analysis.proj", m, c, 1, rng);
    init_conv(store, "synthesis.proj", c, m, 1, rng);
    for i in 0..STAGES {
        let cout = if i == STAGES - 1 { 3 } else { c };
        init_conv(store, &format!("synthesis.{i}.conv"), 4 * cout, c, 3, rng);
        if i < STAGES - 1 {
            init_gdn(store, &format!("synthesis.{i}.igdn"), c);
        }
    }
    init_conv(store, "hyper.a0", hc, m, 3, rng);
    init_conv(store, "hyper.a1", hc, hc, 3, rng);
    init_conv(store, "hyper.s0", 4 * hc, hc, 3, rng);
    init_conv(store, "hyper.s1", 3 * k * m, hc, 3, rng);
    init_static_mixture(store, "hyper.prior", hc, k, 0.0, 2.0, 1.0);
}

/// Learned input-independent mixture per channel: `{name}.logits/means/scales`, each `[k * channels, 1, 1]`.
pub fn init_static_mixture(store: &mut ParamStore, name: &str, channels: usize, k: usize, centre: f64, spread: f64, scale: f64) {
    store.insert(format!("{name}.logits"), Tensor::zeros(&[k * channels, 1, 1]));
    let offset = |j: usize| centre + (j as f64 - (k as f64 - 1.0) / 2.0) * spread;
    store.insert(format!("{name}.means"), Tensor::from_fn(&[k * channels, 1, 1], |i| offset(i / channels)));
    // softplus^-1(scale - floor)
    let raw = ((scale - SIGMA_FLOOR).exp() - 1.0).ln();
    store.insert(format!("{name}.scales"), Tensor::full(&[k * channels, 1, 1], raw));
}

/// Mixture tensors `(logits, means, scales)` for a `[B, H, W]` symbol tensor.
#[derive(Clone, Copy, Debug)]
pub struct MixtureVars {
    pub logits: Var,
    pub means: Var,
    pub scales: Var,
}

fn positive_scales(g: &mut Graph, raw: Var) -> Var {
    let s = g.softplus(raw);
    g.add_scalar(s, SIGMA_FLOOR)
}

pub fn static_mixture(g: &mut Graph, store: &ParamStore, name: &str, height: usize, width: usize) -> MixtureVars {
    let mut get = |suffix: &str| {
        let p = g.param(store, store.expect(&format!("{name}.{suffix}")));
        g.expand_hw(p, height, width)
    };
    let logits = get("logits");
    let means = get("means");
    let raw = get("scales");
    MixtureVars { logits, means, scales: positive_scales(g, raw) }
}

pub fn analysis_stage(g: &mut Graph, store: &ParamStore, i: usize, x: Var) -> Var {
    let name = stage_name(i);
    let y = conv(g, store, &format!("{name}.conv"), x, ConvSpec::same(5, 2, 1));
    gdn(g, store, &format!("{name}.gdn"), y, false)
}

pub fn project(g: &mut Graph, store: &ParamStore, x: Var) -> Var {
    conv(g, store, "analysis.proj", x, ConvSpec::pointwise())
}

pub fn unproject(g: &mut Graph, store: &ParamStore, y: Var) -> Var {
    conv(g, store, "synthesis.proj", y, ConvSpec::pointwise())
}

/// Synthesis stage `i` doubles resolution; stage 3 emits the RGB image.
pub fn synthesis_stage(g: &mut Graph, store: &ParamStore, i: usize, x: Var) -> Var {
    let y = upconv(g, store, &format!("synthesis.{i}.conv"), x);
    if i < STAGES - 1 {
        gdn(g, store, &format!("synthesis.{i}.igdn"), y, true)
    } else {
        y
    }
}

pub fn hyper_analysis(g: &mut Graph, store: &ParamStore, y: Var) -> Var {
    let a = conv(g, store, "hyper.a0", y, ConvSpec::same(3, 1, 1));
    let a = g.leaky_relu(a, LEAKY_SLOPE);
    conv(g, store, "hyper.a1", a, ConvSpec::same(3, 2, 1))
}

/// Mixture parameters for a bottleneck of spatial size `height x width`.
pub fn hyper_synthesis(g: &mut Graph, store: &ParamStore, cfg: &BackboneConfig, z: Var, height: usize, width: usize) -> MixtureVars {
    let u = upconv(g, store, "hyper.s0", z);
    let u = g.crop(u, height, width);
    let u = g.leaky_relu(u, LEAKY_SLOPE);
    let p = conv(g, store, "hyper.s1", u, ConvSpec::same(3, 1, 1));
    let n = cfg.gmm_components * cfg.bottleneck;
    let logits = g.slice_channels(p, 0, n);
    let means = g.slice_channels(p, n, n);
    let raw = g.slice_channels(p, 2 * n, n);
    MixtureVars { logits, means, scales: positive_scales(g, raw) }
}

/// Image padded (replicating edges) to a multiple of [`LATENT_STRIDE`].
pub fn pad_to_stride(planes: &Planes) -> (Planes, usize, usize) {
    let ph = planes.height.div_ceil(LATENT_STRIDE) * LATENT_STRIDE;
    let pw = planes.width.div_ceil(LATENT_STRIDE) * LATENT_STRIDE;
    (planes.pad_replicate(ph, pw), ph - planes.height, pw - planes.width)
}

/// Frozen feature extractor used for dictionary construction.
#[derive(Clone, Debug)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub params: ParamStore,
    pub fingerprint: [u8; 32],
}

impl Backbone {
    pub fn load(path: impl AsRef<Path>) -> Result<Backbone> {
        let ck = Checkpoint::load(path.as_ref())?;
        let config: BackboneConfig = ck.config_field("backbone")?;
        config.validate()?;
        Ok(Backbone { config, params: ck.params, fingerprint: checkpoint::file_fingerprint(path)? })
    }

    /// Stage outputs `F_1 .. F_4` of an image whose sides are multiples of 16.
    pub fn features(&self, image: &Image) -> Result<Vec<Tensor>> {
        let (h, w) = (image.height(), image.width());
        if h % LATENT_STRIDE != 0 || w % LATENT_STRIDE != 0 {
            return Err(Error::Dimension(format!("{h}x{w} is not a multiple of {LATENT_STRIDE}")));
        }
        let mut g = Graph::no_grad();
        let mut x = g.constant(Tensor::from(image.planes()));
        let mut out = Vec::with_capacity(STAGES);
        for i in 0..STAGES {
            x = analysis_stage(&mut g, &self.params, i, x);
            out.push(g.value(x).clone());
        }
        Ok(out)
    }

    /// Features at scale `s` in `1..=4` (spatial size `side / 2^s`).
    pub fn feature_at(&self, image: &Image, scale: usize) -> Result<Tensor> {
        if !(1..=STAGES).contains(&scale) {
            return Err(Error::Domain(format!("scale {scale} outside 1..=4")));
        }
        let mut g = Graph::no_grad();
        let mut x = g.constant(Tensor::from(image.planes()));
        for i in 0..scale {
            x = analysis_stage(&mut g, &self.params, i, x);
        }
        Ok(g.value(x).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn stage_shapes() {
        let cfg = BackboneConfig::toy();
        let mut store = ParamStore::new();
        init_params(&cfg, &mut store, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
        let mut g = Graph::no_grad();
        let mut x = g.constant(Tensor::full(&[3, 128, 128], 0.5));
        for i in 0..STAGES {
            x = analysis_stage(&mut g, &store, i, x);
            let side = 128 >> (i + 1);
            assert_eq!(g.value(x).shape(), &[cfg.channels, side, side]);
        }
        let y = project(&mut g, &store, x);
        assert_eq!(g.value(y).shape(), &[cfg.bottleneck, 8, 8]);
        let z = hyper_analysis(&mut g, &store, y);
        assert_eq!(g.value(z).shape(), &[cfg.hyper_channels, 4, 4]);
        let mix = hyper_synthesis(&mut g, &store, &cfg, z, 8, 8);
        assert_eq!(g.value(mix.means).shape(), &[cfg.gmm_components * cfg.bottleneck, 8, 8]);
        assert!(g.value(mix.scales).data().iter().all(|&s| s >= SIGMA_FLOOR));
        let mut r = unproject(&mut g, &store, y);
        for i in 0..STAGES {
            r = synthesis_stage(&mut g, &store, i, r);
        }
        assert_eq!(g.value(r).shape(), &[3, 128, 128]);
    }

    #[test]
    fn padding_reaches_stride_multiple() {
        let p = Planes::filled(50, 64, [0.1, 0.2, 0.3]);
        let (q, bottom, right) = pad_to_stride(&p);
        assert_eq!((q.height, q.width, bottom, right), (64, 64, 14, 0));
    }
}
