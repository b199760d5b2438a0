use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::backbone::LATENT_STRIDE;
use crate::error::{Error, Result};
use crate::rfd::{RfdConfig, LAMBDA_LADDER};

/// One training run, read from TOML. Every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Single rate point; ignored when `lambdas` is non-empty.
    pub lambda: f64,
    /// Ladder trained in order, each point warm-started from the previous one.
    pub lambdas: Vec<f64>,
    pub lr: f64,
    pub batch_size: usize,
    /// Optimiser steps per rate point.
    pub steps: usize,
    /// Steps for warm-started ladder points after the first; defaults to `steps`.
    pub warm_steps: Option<usize>,
    pub seed: u64,
    pub frozen_front: bool,
    /// Square crop side, a multiple of 16.
    pub crop: usize,
    pub log_every: usize,
    pub clip_norm: f64,
    pub no_usnb: bool,
    pub no_rfvm: bool,
    pub scales: Option<Vec<usize>>,
    pub model: RfdConfig,
    /// Pre-trained backbone; its front stages are copied (and frozen with `frozen_front`).
    pub backbone: Option<PathBuf>,
    /// Checkpoint whose matching parameters initialise the first rate point.
    pub init: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 128.0,
            lambdas: Vec::new(),
            lr: 1e-4,
            batch_size: 8,
            steps: 2000,
            warm_steps: None,
            seed: 0,
            frozen_front: true,
            crop: 128,
            log_every: 10,
            clip_norm: 1.0,
            no_usnb: false,
            no_rfvm: false,
            scales: None,
            model: RfdConfig::default(),
            backbone: None,
            init: None,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; relative paths inside it are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = TrainConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.backbone, &mut cfg.init].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Rate points in training order.
    pub fn ladder(&self) -> Vec<f64> {
        if self.lambdas.is_empty() {
            vec![self.lambda]
        } else {
            self.lambdas.clone()
        }
    }

    /// Model configuration with the training-time ablation switches applied.
    pub fn model_config(&self) -> RfdConfig {
        let mut m = self.model.clone();
        m.usnb &= !self.no_usnb;
        m.rfvm &= !self.no_rfvm;
        if let Some(s) = &self.scales {
            m.scales = s.clone();
        }
        if m.scales.is_empty() {
            m.usnb = false;
            m.rfvm = false;
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        for l in self.ladder() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Configuration(format!("lambda {l} must be positive")));
            }
            if !LAMBDA_LADDER.contains(&l) {
                log::warn!("lambda {l} is off the standard ladder; containers will carry no lambda id");
            }
        }
        if self.frozen_front && self.backbone.is_none() {
            return Err(Error::Configuration("frozen_front needs a backbone checkpoint".into()));
        }
        if self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::Configuration("batch_size and log_every must be positive".into()));
        }
        if self.crop == 0 || self.crop % LATENT_STRIDE != 0 {
            return Err(Error::Configuration(format!("crop {} is not a positive multiple of {LATENT_STRIDE}", self.crop)));
        }
        if !(self.lr > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Configuration("lr and clip_norm must be positive".into()));
        }
        self.model_config().validate()
    }
}
