//! The reference-feature codec.
//!
//! Encoder: `F_2 = front(x)`; at each active scale the input features are
//! matched against style-normalised dictionary entries, the match is morphed
//! by the recursive filter under a transmitted dependency map and subtracted;
//! analysis continues on the residual. Decoder: the same references are
//! rebuilt from the index, the quantised map and the transmitted priors and
//! added back after the corresponding synthesis stage.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::dependency::{self, compute_dependency};
use super::matching::feature_match;
use super::priors::{entry_maps, InputPriors};
use super::svrconv::svrconv;
use super::usnb::{self, usnb_normalize, PriorMaps};
use crate::bitstream::{BitBreakdown, Container, Flags, HuffmanCode, Padding};
use crate::bitstream::bits::{BitReader, BitWriter};
use crate::codec::backbone::{
    self, analysis_stage, hyper_analysis, hyper_synthesis, init_static_mixture, pad_to_stride, project, static_mixture,
    synthesis_stage, unproject, MixtureVars, FRONT_PREFIX,
};
use crate::codec::checkpoint::{hex, unhex, Checkpoint};
use crate::codec::entropy;
use crate::codec::gmm::{element_params, gmm_bits};
use crate::codec::quantize::{round_half_away, uniform_noise};
use crate::codec::{Backbone, BackboneConfig};
use crate::dictionary::FeatureDictionary;
use crate::error::{Error, Result};
use crate::image::{Image, Planes};
use crate::nn::{Graph, ParamStore, Tensor, Var};
use crate::physical::{estimate_priors, UnderwaterPriors};

/// Dependency maps are sent as `round(W * W_LEVELS)`, 6 bits.
pub const W_LEVELS: f64 = 63.0;
pub const LAMBDA_LADDER: [f64; 5] = [32.0, 64.0, 128.0, 256.0, 512.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfdConfig {
    pub backbone: BackboneConfig,
    /// Reference scales, ascending subset of {2, 3, 4}; empty gives the plain hyperprior codec.
    pub scales: Vec<usize>,
    pub usnb: bool,
    pub rfvm: bool,
    pub groups: usize,
    pub usnb_hidden: usize,
    pub dependency_hidden: usize,
}

impl Default for RfdConfig {
    fn default() -> Self {
        RfdConfig {
            backbone: BackboneConfig::default(),
            scales: vec![2, 3, 4],
            usnb: true,
            rfvm: true,
            groups: 4,
            usnb_hidden: 16,
            dependency_hidden: 64,
        }
    }
}

impl RfdConfig {
    pub fn toy() -> Self {
        RfdConfig { backbone: BackboneConfig::toy(), dependency_hidden: 16, ..RfdConfig::default() }
    }

    pub fn baseline(backbone: BackboneConfig) -> Self {
        RfdConfig { backbone, scales: Vec::new(), usnb: false, rfvm: false, ..RfdConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.scales.windows(2).any(|w| w[0] >= w[1]) || self.scales.iter().any(|s| !(2..=4).contains(s)) {
            return Err(Error::Configuration(format!("scales {:?} must be an ascending subset of 2,3,4", self.scales)));
        }
        let c = self.backbone.channels;
        if self.groups == 0 || self.groups > c || c % self.groups != 0 {
            return Err(Error::Configuration(format!("{} groups do not divide {c} channels", self.groups)));
        }
        if self.usnb_hidden < 6 || self.dependency_hidden == 0 {
            return Err(Error::Configuration("hidden widths too small".into()));
        }
        Ok(())
    }

    pub fn flags(&self) -> Flags {
        Flags { usnb: self.usnb && !self.scales.is_empty(), rfvm: self.rfvm && !self.scales.is_empty(), scales: self.scales.clone() }
    }
}

/// Inference-time switches that remove parts of a trained model.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub no_usnb: bool,
    pub no_rfvm: bool,
    pub scales: Option<Vec<usize>>,
}

impl Ablation {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_usnb {
            parts.push("no-usnb".to_string());
        }
        if self.no_rfvm {
            parts.push("no-rfvm".to_string());
        }
        if let Some(s) = &self.scales {
            parts.push(format!("scales-{}", s.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("")));
        }
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Additive uniform noise in place of rounding.
    Train,
    Infer,
}

/// What happened at one reference scale.
#[derive(Clone, Debug)]
pub struct ScaleState {
    pub scale: usize,
    pub index: usize,
    pub score: f64,
    pub features: Var,
    pub reference: Var,
    pub residual: Var,
    /// Quantised dependency levels (inference only).
    pub w_symbols: Vec<i64>,
    pub w_bits: Option<Var>,
}

pub struct ForwardPass {
    pub x_hat: Var,
    pub y_hat: Var,
    pub z_hat: Var,
    pub bits_y: Var,
    pub bits_z: Var,
    pub scales: Vec<ScaleState>,
}

impl ForwardPass {
    /// Sum of all rate terms, in bits.
    pub fn total_bits(&self, g: &mut Graph) -> Var {
        let mut total = g.add(self.bits_y, self.bits_z);
        for s in &self.scales {
            if let Some(b) = s.w_bits {
                total = g.add(total, b);
            }
        }
        total
    }
}

/// Result of encoding one image.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub container: Container,
    pub bytes: Vec<u8>,
    pub breakdown: BitBreakdown,
    /// Encoder-side reconstruction, which the decoder must reproduce bit for bit.
    pub reconstruction: Planes,
    pub indices: Vec<(usize, usize)>,
    /// `(scale, |F_s|^2, |F_s - RD_s|^2)`.
    pub energies: Vec<(usize, f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct RfdModel {
    pub config: RfdConfig,
    pub params: ParamStore,
    pub backbone_fingerprint: [u8; 32],
    pub index_tables: BTreeMap<usize, HuffmanCode>,
    pub lambda: f64,
}

fn w_prior_name(scale: usize) -> String {
    format!("rfvm.{scale}.wprior")
}

fn noise_or_round(g: &mut Graph, v: Var, mode: Mode, rng: &mut impl Rng) -> Var {
    match mode {
        Mode::Train => {
            let u = uniform_noise(g.value(v).shape(), rng);
            let u = g.constant(u);
            g.add(v, u)
        }
        Mode::Infer => {
            let q = g.value(v).map(round_half_away);
            g.constant(q)
        }
    }
}

fn symbols(t: &Tensor) -> Vec<i64> {
    t.data().iter().map(|&v| v as i64).collect()
}

fn mixture_values(g: &Graph, m: &MixtureVars) -> (Tensor, Tensor, Tensor) {
    (g.value(m.logits).clone(), g.value(m.means).clone(), g.value(m.scales).clone())
}

fn encode_stream(syms: &[i64], mix: &(Tensor, Tensor, Tensor), k: usize) -> Vec<u8> {
    entropy::encode_all(syms, |i| element_params(&mix.0, &mix.1, &mix.2, k, i))
}

fn decode_stream(bytes: &[u8], n: usize, mix: &(Tensor, Tensor, Tensor), k: usize) -> Result<Vec<i64>> {
    entropy::decode_all(bytes, n, |i| element_params(&mix.0, &mix.1, &mix.2, k, i))
}

fn lambda_id(lambda: f64) -> u8 {
    LAMBDA_LADDER.iter().position(|&l| l == lambda).map(|i| i as u8).unwrap_or(u8::MAX)
}

impl RfdModel {
    /// Fresh parameters; nothing frozen.
    pub fn new(config: RfdConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        backbone::init_params(&config.backbone, &mut params, &mut rng);
        let (c, k) = (config.backbone.channels, config.backbone.gmm_components);
        for &s in &config.scales {
            if config.usnb {
                usnb::init_params(&mut params, s, c, config.usnb_hidden, &mut rng);
            }
            if config.rfvm {
                dependency::init_params(&mut params, s, c, config.dependency_hidden, config.groups, &mut rng);
                init_static_mixture(&mut params, &w_prior_name(s), config.groups, k, dependency::initial_level(W_LEVELS), 0.1, 0.25);
            }
        }
        Ok(RfdModel { config, params, backbone_fingerprint: [0; 32], index_tables: BTreeMap::new(), lambda: 128.0 })
    }

    /// Fresh parameters with the front stages copied from `backbone` and frozen.
    pub fn from_backbone(config: RfdConfig, backbone: &Backbone, seed: u64) -> Result<Self> {
        if config.backbone != backbone.config {
            return Err(Error::Incompatible {
                expected: format!("{:?}", config.backbone),
                found: format!("{:?}", backbone.config),
            });
        }
        let mut m = RfdModel::new(config, seed)?;
        for id in backbone.params.ids() {
            let name = backbone.params.name(id);
            if name.starts_with(FRONT_PREFIX) {
                m.params.insert(name, backbone.params.tensor(id).clone());
            }
        }
        m.params.freeze_prefix(FRONT_PREFIX);
        m.backbone_fingerprint = backbone.fingerprint;
        Ok(m)
    }

    /// The same model with parts switched off.
    pub fn with_ablation(&self, a: &Ablation) -> Result<Self> {
        let mut m = self.clone();
        m.config.usnb &= !a.no_usnb;
        m.config.rfvm &= !a.no_rfvm;
        if let Some(s) = &a.scales {
            if s.iter().any(|x| !self.config.scales.contains(x)) {
                return Err(Error::Configuration(format!("scales {s:?} not all trained (have {:?})", self.config.scales)));
            }
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            m.config.scales = s;
        }
        Ok(m)
    }

    pub fn lambda_id(&self) -> u8 {
        lambda_id(self.lambda)
    }

    pub fn index_table(&self, scale: usize, k: usize) -> Result<HuffmanCode> {
        match self.index_tables.get(&scale) {
            Some(t) if t.alphabet() == k => Ok(t.clone()),
            _ => HuffmanCode::uniform(k),
        }
    }

    /// Checks the dictionary against the model before any reference is used.
    pub fn check_dictionary(&self, dict: Option<&FeatureDictionary>) -> Result<()> {
        if self.config.scales.is_empty() {
            return Ok(());
        }
        let d = dict.ok_or_else(|| Error::Configuration("this model needs a feature dictionary".into()))?;
        d.check_fingerprint(&self.backbone_fingerprint)?;
        if d.channels != self.config.backbone.channels {
            return Err(Error::Incompatible {
                expected: format!("{} channels", self.config.backbone.channels),
                found: format!("{} channels", d.channels),
            });
        }
        for &s in &self.config.scales {
            if d.scale(s).is_none() {
                return Err(Error::Configuration(format!("dictionary lacks scale {s}")));
            }
        }
        Ok(())
    }

    /// Entry `i` at `scale`, style-normalised toward `input` when USNB is on.
    pub fn normalized_entry(
        &self,
        g: &mut Graph,
        dict: &FeatureDictionary,
        scale: usize,
        i: usize,
        input: &PriorMaps,
    ) -> Result<Var> {
        let ds = dict.scale(scale).ok_or_else(|| Error::Configuration(format!("dictionary lacks scale {scale}")))?;
        let entry = ds.entries.get(i).ok_or_else(|| Error::Domain(format!("index {i} outside dictionary of {}", dict.k)))?;
        let (_, h, w) = input.transmission.chw();
        let d = g.constant(entry.tile_to(h, w));
        if !self.config.usnb {
            return Ok(d);
        }
        let dm = entry_maps(&ds.priors[i], h, w);
        usnb_normalize(g, &self.params, scale, d, &dm, input)
    }

    /// All normalised entries at `scale` (no gradients).
    pub fn normalized_entries(&self, dict: &FeatureDictionary, scale: usize, input: &PriorMaps) -> Result<Vec<Tensor>> {
        (0..dict.k)
            .map(|i| {
                let mut g = Graph::no_grad();
                let v = self.normalized_entry(&mut g, dict, scale, i, input)?;
                Ok(g.value(v).clone())
            })
            .collect()
    }

    /// Reference `RD_s` from a normalised entry and (optionally) dequantised dependency levels.
    fn reference(&self, g: &mut Graph, nd: Var, w_hat: Option<Var>) -> Var {
        match w_hat {
            Some(w) => svrconv(g, nd, w),
            None => nd,
        }
    }

    /// Decoder path from the quantised latent and per-scale references.
    pub fn synthesize(&self, g: &mut Graph, y_hat: Var, refs: &BTreeMap<usize, Var>) -> Var {
        let store = &self.params;
        let mut u = unproject(g, store, y_hat);
        if let Some(&r) = refs.get(&4) {
            u = g.add(u, r);
        }
        for (stage, scale) in [(0, 3), (1, 2)] {
            u = synthesis_stage(g, store, stage, u);
            if let Some(&r) = refs.get(&scale) {
                u = g.add(u, r);
            }
        }
        u = synthesis_stage(g, store, 2, u);
        synthesis_stage(g, store, 3, u)
    }

    /// Full analysis/synthesis pass on a padded `[3, H, W]` image.
    pub fn forward(
        &self,
        g: &mut Graph,
        x: &Tensor,
        priors: &InputPriors,
        dict: Option<&FeatureDictionary>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<ForwardPass> {
        self.check_dictionary(dict)?;
        let store = &self.params;
        let k = self.config.backbone.gmm_components;
        let xv = g.constant(x.clone());
        let f1 = analysis_stage(g, store, 0, xv);
        let mut cur = analysis_stage(g, store, 1, f1);
        let mut states = Vec::new();
        let mut refs = BTreeMap::new();
        for s in 2..=4 {
            if self.config.scales.contains(&s) {
                let dict = dict.expect("checked above");
                let (_, h, w) = g.value(cur).chw();
                let input = priors.maps_at(s, h, w)?;
                let candidates = self.normalized_entries(dict, s, &input)?;
                let (index, score) = feature_match(g.value(cur), &candidates)?;
                let nd = self.normalized_entry(g, dict, s, index, &input)?;
                let mut w_symbols = Vec::new();
                let mut w_bits = None;
                let w_hat = if self.config.rfvm {
                    let wmap = compute_dependency(g, store, s, cur, nd)?;
                    let scaled = g.scale(wmap, W_LEVELS);
                    let v = match mode {
                        Mode::Train => noise_or_round(g, scaled, mode, rng),
                        Mode::Infer => {
                            let q = g.value(scaled).map(|v| round_half_away(v).clamp(0.0, W_LEVELS));
                            w_symbols = symbols(&q);
                            g.constant(q)
                        }
                    };
                    let mix = static_mixture(g, store, &w_prior_name(s), h, w);
                    w_bits = Some(gmm_bits(g, v, mix.logits, mix.means, mix.scales, k));
                    Some(g.scale(v, 1.0 / W_LEVELS))
                } else {
                    None
                };
                let reference = self.reference(g, nd, w_hat);
                let residual = g.sub(cur, reference);
                states.push(ScaleState { scale: s, index, score, features: cur, reference, residual, w_symbols, w_bits });
                refs.insert(s, reference);
                cur = residual;
            }
            if s < 4 {
                cur = analysis_stage(g, store, s, cur);
            }
        }
        let y = project(g, store, cur);
        let y_hat = noise_or_round(g, y, mode, rng);
        let z = hyper_analysis(g, store, y);
        let z_hat = noise_or_round(g, z, mode, rng);
        let (_, zh, zw) = g.value(z_hat).chw();
        let zmix = static_mixture(g, store, "hyper.prior", zh, zw);
        let bits_z = gmm_bits(g, z_hat, zmix.logits, zmix.means, zmix.scales, k);
        let (_, yh, yw) = g.value(y_hat).chw();
        let ymix = hyper_synthesis(g, store, &self.config.backbone, z_hat, yh, yw);
        let bits_y = gmm_bits(g, y_hat, ymix.logits, ymix.means, ymix.scales, k);
        let x_hat = self.synthesize(g, y_hat, &refs);
        Ok(ForwardPass { x_hat, y_hat, z_hat, bits_y, bits_z, scales: states })
    }

    /// Encodes with priors estimated from the (padded) image.
    pub fn encode(&self, image: &Image, dict: Option<&FeatureDictionary>) -> Result<Encoded> {
        let (padded, _, _) = pad_to_stride(image.planes());
        let priors = estimate_priors(&Image::clamped(padded)?);
        self.encode_with_priors(image, &priors, dict)
    }

    /// Encodes with caller-supplied priors covering the padded image.
    pub fn encode_with_priors(&self, image: &Image, priors: &UnderwaterPriors, dict: Option<&FeatureDictionary>) -> Result<Encoded> {
        let (padded, bottom, right) = pad_to_stride(image.planes());
        if priors.height() != padded.height || priors.width() != padded.width {
            return Err(Error::Dimension(format!(
                "priors {}x{} do not cover the padded image {}x{}",
                priors.height(),
                priors.width(),
                padded.height,
                padded.width
            )));
        }
        if bottom > u8::MAX as usize || right > u8::MAX as usize {
            return Err(Error::Domain("padding exceeds 255".into()));
        }
        let input = InputPriors::from_priors(priors);
        let k = self.config.backbone.gmm_components;
        let mut g = Graph::no_grad();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fp = self.forward(&mut g, &Tensor::from(&padded), &input, dict, Mode::Infer, &mut rng)?;

        let z_hat = g.value(fp.z_hat).clone();
        let (_, zh, zw) = z_hat.chw();
        let zmix = static_mixture(&mut g, &self.params, "hyper.prior", zh, zw);
        let hyper_stream = encode_stream(&symbols(&z_hat), &mixture_values(&g, &zmix), k);
        let y_hat = g.value(fp.y_hat).clone();
        let (_, yh, yw) = y_hat.chw();
        let zc = g.constant(z_hat);
        let ymix = hyper_synthesis(&mut g, &self.params, &self.config.backbone, zc, yh, yw);
        let z_stream = encode_stream(&symbols(&y_hat), &mixture_values(&g, &ymix), k);

        let mut w_streams = Vec::new();
        let mut index_writer = BitWriter::new();
        let mut indices = Vec::new();
        let mut energies = Vec::new();
        for st in &fp.scales {
            let (_, h, w) = g.value(st.features).chw();
            if self.config.rfvm {
                let mix = static_mixture(&mut g, &self.params, &w_prior_name(st.scale), h, w);
                w_streams.push(encode_stream(&st.w_symbols, &mixture_values(&g, &mix), k));
            }
            let kdict = dict.expect("forward checked the dictionary").k;
            self.index_table(st.scale, kdict)?.encode(&mut index_writer, st.index)?;
            indices.push((st.scale, st.index));
            let f = g.value(st.features);
            energies.push((st.scale, f.dot(f), g.value(st.residual).dot(g.value(st.residual))));
        }
        let index_bit_len = index_writer.len_bits();
        let carries_priors = self.config.usnb && !self.config.scales.is_empty();
        let container = Container {
            height: image.height(),
            width: image.width(),
            padding: Padding { top: 0, left: 0, bottom: bottom as u8, right: right as u8 },
            lambda_id: self.lambda_id(),
            flags: self.config.flags(),
            ambient: if carries_priors { input.ambient } else { [0.0; 3] },
            transmission: if carries_priors { input.levels.clone() } else { Vec::new() },
            index_bits: index_writer.into_bytes(),
            index_bit_len,
            hyper_stream,
            z_stream,
            w_streams,
        };
        let (bytes, breakdown) = container.pack_with_breakdown()?;
        let reconstruction = g.value(fp.x_hat).to_planes()?.crop(0, 0, image.height(), image.width())?;
        Ok(Encoded { container, bytes, breakdown, reconstruction, indices, energies })
    }

    /// Unclamped reconstruction from container bytes.
    pub fn decode_planes(&self, bytes: &[u8], dict: Option<&FeatureDictionary>) -> Result<Planes> {
        let c = Container::unpack(bytes)?;
        let variant = self.variant_for(&c.flags)?;
        variant.decode_container(&c, dict)
    }

    pub fn decode(&self, bytes: &[u8], dict: Option<&FeatureDictionary>) -> Result<Image> {
        Image::clamped(self.decode_planes(bytes, dict)?)
    }

    fn variant_for(&self, flags: &Flags) -> Result<RfdModel> {
        if flags.scales.iter().any(|s| !self.config.scales.contains(s))
            || (flags.usnb && !self.config.usnb)
            || (flags.rfvm && !self.config.rfvm)
        {
            return Err(Error::Incompatible { expected: format!("{:?}", self.config.flags()), found: format!("{flags:?}") });
        }
        let mut m = self.clone();
        m.config.scales = flags.scales.clone();
        m.config.usnb = flags.usnb;
        m.config.rfvm = flags.rfvm;
        Ok(m)
    }

    fn decode_container(&self, c: &Container, dict: Option<&FeatureDictionary>) -> Result<Planes> {
        self.check_dictionary(dict)?;
        let k = self.config.backbone.gmm_components;
        let cfg = &self.config.backbone;
        let (ph, pw) = c.padded_size();
        let (yh, yw) = (ph / 16, pw / 16);
        let (zh, zw) = (yh.div_ceil(2), yw.div_ceil(2));
        let mut g = Graph::no_grad();

        let zmix = static_mixture(&mut g, &self.params, "hyper.prior", zh, zw);
        let z = decode_stream(&c.hyper_stream, cfg.hyper_channels * zh * zw, &mixture_values(&g, &zmix), k)?;
        let z_hat = g.constant(Tensor::new(vec![cfg.hyper_channels, zh, zw], z.iter().map(|&v| v as f64).collect())?);
        let ymix = hyper_synthesis(&mut g, &self.params, cfg, z_hat, yh, yw);
        let y = decode_stream(&c.z_stream, cfg.bottleneck * yh * yw, &mixture_values(&g, &ymix), k)?;
        let y_hat = g.constant(Tensor::new(vec![cfg.bottleneck, yh, yw], y.iter().map(|&v| v as f64).collect())?);

        let mut refs = BTreeMap::new();
        if !self.config.scales.is_empty() {
            let dict = dict.expect("checked above");
            let (gh, gw) = c.prior_grid();
            // without style normalisation the priors only fix the grid shape
            let levels = if c.carries_priors() { c.transmission.clone() } else { vec![u8::MAX; 3 * gh * gw] };
            let priors = InputPriors::from_levels(c.ambient, levels, gh, gw)?;
            let mut reader = BitReader::new(&c.index_bits);
            for (n, &s) in self.config.scales.iter().enumerate() {
                let index = self.index_table(s, dict.k)?.decode(&mut reader)?;
                if index >= dict.k {
                    return Err(Error::Corruption(format!("reference index {index} at scale {s}")));
                }
                let (h, w) = (ph >> s, pw >> s);
                let input = priors.maps_at(s, h, w)?;
                let nd = self.normalized_entry(&mut g, dict, s, index, &input)?;
                let w_hat = if self.config.rfvm {
                    let mix = static_mixture(&mut g, &self.params, &w_prior_name(s), h, w);
                    let q = decode_stream(&c.w_streams[n], self.config.groups * h * w, &mixture_values(&g, &mix), k)?;
                    let q = Tensor::new(vec![self.config.groups, h, w], q.iter().map(|&v| v as f64).collect())?;
                    let qv = g.constant(q);
                    Some(g.scale(qv, 1.0 / W_LEVELS))
                } else {
                    None
                };
                refs.insert(s, self.reference(&mut g, nd, w_hat));
            }
            if reader.position() != c.index_bit_len {
                return Err(Error::Corruption("index bits left over after decoding".into()));
            }
        }
        let x_hat = self.synthesize(&mut g, y_hat, &refs);
        g.value(x_hat).to_planes()?.crop(c.padding.top as usize, c.padding.left as usize, c.height, c.width)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let tables: BTreeMap<String, Vec<u64>> =
            self.index_tables.iter().map(|(s, t)| (s.to_string(), t.freqs().to_vec())).collect();
        let config = json!({
            "backbone": self.config.backbone,
            "rfd": self.config,
            "backbone_fingerprint": hex(&self.backbone_fingerprint),
            "lambda": self.lambda,
            "index_tables": tables,
            "frozen": self.params.ids().filter(|&id| self.params.is_frozen(id)).map(|id| self.params.name(id).to_string()).collect::<Vec<_>>(),
        });
        Checkpoint::new(config, self.params.clone())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: RfdConfig = ck.config_field("rfd")?;
        config.validate()?;
        let tables: BTreeMap<String, Vec<u64>> = ck.config_field("index_tables")?;
        let index_tables = tables
            .into_iter()
            .map(|(s, f)| {
                let s: usize = s.parse().map_err(|_| Error::Format(format!("index table key `{s}`")))?;
                Ok((s, HuffmanCode::from_freqs(&f)?))
            })
            .collect::<Result<_>>()?;
        let mut params = ck.params.clone();
        let frozen: Vec<String> = ck.config_field("frozen")?;
        for name in frozen {
            let id = params.id(&name).ok_or_else(|| Error::Format(format!("frozen parameter {name} missing")))?;
            params.set_frozen(id, true);
        }
        Ok(RfdModel {
            config,
            params,
            backbone_fingerprint: unhex(&ck.config_field::<String>("backbone_fingerprint")?)?,
            index_tables,
            lambda: ck.config_field("lambda")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RfdModel::from_checkpoint(&Checkpoint::load(path)?)
    }
}
