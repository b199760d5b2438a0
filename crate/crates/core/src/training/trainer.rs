//! Batch training loop over one rate point and over a ladder of them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::data::{Sampler, TrainData};
use super::loss::rd_loss_var;
use crate::bitstream::HuffmanCode;
use crate::codec::backbone::FRONT_PREFIX;
use crate::codec::checkpoint::hex;
use crate::codec::Backbone;
use crate::dictionary::FeatureDictionary;
use crate::error::{Error, Result};
use crate::nn::{Adam, GradBuffer, Graph, Tensor};
use crate::rfd::{InputPriors, Mode, RfdModel};

/// One line of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub loss: f64,
    pub bpp_est: f64,
    pub mse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub bpp_est: f64,
    pub mse: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub lambda: f64,
    pub steps: usize,
    /// Objective on the full training images before the first update.
    pub initial: LossStats,
    pub last: LossStats,
    pub front_digest_before: String,
    pub front_digest_after: String,
    pub seconds: f64,
}

/// Forward pass plus loss for one input; returns `(loss var, stats)`.
fn sample_loss(
    model: &RfdModel,
    g: &mut Graph,
    x: &Tensor,
    priors: &InputPriors,
    dict: Option<&FeatureDictionary>,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(crate::nn::Var, LossStats)> {
    let (_, h, w) = x.chw();
    let pass = model.forward(g, x, priors, dict, Mode::Train, rng)?;
    let bits = pass.total_bits(g);
    let xv = g.constant(x.clone());
    let (loss, mse) = rd_loss_var(g, xv, pass.x_hat, bits, lambda, h * w);
    let stats = LossStats { loss: g.value(loss).item(), bpp_est: g.value(bits).item() / (h * w) as f64, mse: g.value(mse).item() };
    Ok((loss, stats))
}

fn mean_stats(s: &[LossStats]) -> LossStats {
    let n = s.len() as f64;
    LossStats {
        loss: s.iter().map(|v| v.loss).sum::<f64>() / n,
        bpp_est: s.iter().map(|v| v.bpp_est).sum::<f64>() / n,
        mse: s.iter().map(|v| v.mse).sum::<f64>() / n,
    }
}

/// Training objective averaged over the full (uncropped) images, with seeded noise.
pub fn objective(model: &RfdModel, data: &TrainData, dict: Option<&FeatureDictionary>, lambda: f64, seed: u64) -> Result<LossStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stats = data
        .samples
        .iter()
        .map(|s| {
            let (x, p) = s.full()?;
            let mut g = Graph::no_grad();
            Ok(sample_loss(model, &mut g, &x, &p, dict, lambda, &mut rng)?.1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_stats(&stats))
}

/// Static index codes from the entries the model selects on the training images.
pub fn fit_index_tables(model: &RfdModel, data: &TrainData, dict: Option<&FeatureDictionary>) -> Result<BTreeMap<usize, HuffmanCode>> {
    let mut seen: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let Some(d) = dict else { return Ok(BTreeMap::new()) };
    if model.config.scales.is_empty() {
        return Ok(BTreeMap::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for s in &data.samples {
        let (x, p) = s.full()?;
        let mut g = Graph::no_grad();
        let pass = model.forward(&mut g, &x, &p, dict, Mode::Infer, &mut rng)?;
        for st in pass.scales {
            seen.entry(st.scale).or_default().push(st.index);
        }
    }
    seen.into_iter().map(|(s, idx)| Ok((s, HuffmanCode::from_observations(&idx, d.k)?))).collect()
}

/// Trains `model` at one rate point for `steps` optimiser steps.
/// `sink` receives every logged row.
#[allow(clippy::too_many_arguments)]
pub fn train_run(
    model: &mut RfdModel,
    data: &TrainData,
    dict: Option<&FeatureDictionary>,
    cfg: &TrainConfig,
    lambda: f64,
    steps: usize,
    seed: u64,
    mut sink: impl FnMut(&MetricRow) -> Result<()>,
) -> Result<RunSummary> {
    if data.is_empty() {
        return Err(Error::Configuration("empty training set".into()));
    }
    model.check_dictionary(dict)?;
    let started = Instant::now();
    model.lambda = lambda;
    let before = model.params.digest(FRONT_PREFIX);
    let initial = objective(model, data, dict, lambda, seed)?;
    let mut sampler = Sampler::new(data.len(), cfg.crop, seed);
    let mut noise = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut adam = Adam::new(cfg.lr);
    let mut last = initial;
    for step in 0..steps {
        let mut grads = GradBuffer::new(&model.params);
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let d = sampler.next(data);
            let (x, p) = data.samples[d.sample].view(d.top, d.left, d.height, d.width, d.flip)?;
            let mut g = Graph::new();
            let (loss, stats) = sample_loss(model, &mut g, &x, &p, dict, lambda, &mut noise)?;
            batch.push(stats);
            if stats.loss.is_finite() {
                grads.accumulate(&g, &g.backward(loss));
            }
        }
        grads.scale(1.0 / cfg.batch_size as f64);
        let stats = mean_stats(&batch);
        if !stats.loss.is_finite() || !grads.is_finite() {
            let per: Vec<String> = batch.iter().map(|s| format!("(loss {}, bpp {}, mse {})", s.loss, s.bpp_est, s.mse)).collect();
            return Err(Error::NonFiniteLoss {
                step,
                diagnostics: format!("lambda {lambda}, grad norm {}, batch [{}]", grads.global_norm(), per.join(", ")),
            });
        }
        grads.clip_global_norm(cfg.clip_norm);
        adam.step(&mut model.params, &grads);
        last = stats;
        if step % cfg.log_every == 0 || step + 1 == steps {
            sink(&MetricRow { step, loss: stats.loss, bpp_est: stats.bpp_est, mse: stats.mse })?;
        }
    }
    let after = model.params.digest(FRONT_PREFIX);
    if cfg.frozen_front && before != after {
        return Err(Error::Configuration("frozen front parameters changed during training".into()));
    }
    model.index_tables = fit_index_tables(model, data, dict)?;
    Ok(RunSummary {
        lambda,
        steps,
        initial,
        last,
        front_digest_before: hex(&before),
        front_digest_after: hex(&after),
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Initial model of a run: fresh, front copied from the backbone, optionally warm-started.
pub fn initial_model(cfg: &TrainConfig) -> Result<RfdModel> {
    let config = cfg.model_config();
    let mut model = match &cfg.backbone {
        Some(path) => {
            let bb = Backbone::load(path)?;
            let mut m = RfdModel::from_backbone(config, &bb, cfg.seed)?;
            if !cfg.frozen_front {
                let ids: Vec<_> = m.params.ids().collect();
                for id in ids {
                    m.params.set_frozen(id, false);
                }
            }
            m
        }
        None => RfdModel::new(config, cfg.seed)?,
    };
    if let Some(path) = &cfg.init {
        let src = RfdModel::load(path)?;
        let mut copied = 0;
        for id in src.params.ids() {
            let name = src.params.name(id);
            if let Some(dst) = model.params.id(name) {
                if model.params.is_frozen(dst) {
                    continue;
                }
                if model.params.tensor(dst).shape() != src.params.tensor(id).shape() {
                    return Err(Error::Dimension(format!("parameter {name} differs in shape from {}", path.display())));
                }
                *model.params.tensor_mut(dst) = src.params.tensor(id).clone();
                copied += 1;
            }
        }
        log::info!("initialised {copied} parameters from {}", path.display());
    }
    Ok(model)
}

pub fn checkpoint_name(lambda: f64) -> String {
    format!("lambda_{lambda}.ckpt")
}

#[derive(Clone, Debug)]
pub struct LadderOutput {
    pub checkpoints: Vec<PathBuf>,
    pub summaries: Vec<RunSummary>,
}

/// Trains every rate point of `cfg`, writing `lambda_<l>.ckpt`, `metrics_lambda<l>.csv`
/// and `summary.json` into `out`.
pub fn train_ladder(cfg: &TrainConfig, data: &TrainData, dict: Option<&FeatureDictionary>, out: &Path) -> Result<LadderOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut model = initial_model(cfg)?;
    let mut result = LadderOutput { checkpoints: Vec::new(), summaries: Vec::new() };
    for (i, lambda) in cfg.ladder().into_iter().enumerate() {
        let csv_path = out.join(format!("metrics_lambda{lambda}.csv"));
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::Format(e.to_string()))?;
        let steps = if i == 0 { cfg.steps } else { cfg.warm_steps.unwrap_or(cfg.steps) };
        let summary = train_run(&mut model, data, dict, cfg, lambda, steps, cfg.seed.wrapping_add(i as u64), |row| {
            log::info!("lambda {lambda} step {} loss {:.5} bpp {:.4} mse {:.6}", row.step, row.loss, row.bpp_est, row.mse);
            w.serialize(row).map_err(|e| Error::Format(e.to_string()))
        })?;
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        let ck = out.join(checkpoint_name(lambda));
        model.save(&ck)?;
        result.checkpoints.push(ck);
        result.summaries.push(summary);
    }
    let summary_path = out.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_vec_pretty(&result.summaries)?).map_err(|e| Error::io(&summary_path, e))?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfd::RfdConfig;
    use crate::synthetic::underwater_set;

    fn tiny() -> TrainConfig {
        let mut model = RfdConfig::baseline(crate::codec::BackboneConfig::toy());
        model.backbone.channels = 8;
        model.backbone.bottleneck = 4;
        model.backbone.hyper_channels = 4;
        TrainConfig { frozen_front: false, steps: 6, batch_size: 2, crop: 32, log_every: 2, lr: 1e-3, model, ..TrainConfig::default() }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let data = TrainData::from_images(&underwater_set(2, 2, 3, 32, 32).unwrap()).unwrap();
        let cfg = tiny();
        let run = || {
            let mut m = initial_model(&cfg).unwrap();
            let mut rows = Vec::new();
            train_run(&mut m, &data, None, &cfg, 64.0, cfg.steps, 1, |r| {
                rows.push(*r);
                Ok(())
            })
            .unwrap();
            rows
        };
        let a = run();
        assert_eq!(a.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 2, 4, 5]);
        assert_eq!(a, run());
    }

    #[test]
    fn ladder_writes_artifacts() {
        let data = TrainData::from_images(&underwater_set(1, 2, 4, 32, 32).unwrap()).unwrap();
        let cfg = TrainConfig { lambdas: vec![32.0, 64.0], steps: 2, ..tiny() };
        let dir = tempfile::tempdir().unwrap();
        let out = train_ladder(&cfg, &data, None, dir.path()).unwrap();
        assert_eq!(out.checkpoints.len(), 2);
        let m = RfdModel::load(&out.checkpoints[1]).unwrap();
        assert_eq!(m.lambda, 64.0);
        let text = std::fs::read_to_string(dir.path().join("metrics_lambda32.csv")).unwrap();
        assert!(text.starts_with("step,loss,bpp_est,mse\n"));
        assert!(dir.path().join("summary.json").exists());
    }
}
