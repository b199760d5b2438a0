use rfdc::codec::BackboneConfig;
use rfdc::dictionary::{build_dictionary, BuildConfig, KMeansConfig};
use rfdc::eval::{psnr_from_mse, run_eval};
use rfdc::rfd::{Ablation, RfdConfig, RfdModel, LAMBDA_LADDER};
use rfdc::synthetic::underwater_set;
use rfdc::training::{initial_model, train_ladder, train_run, MetricRow, TrainConfig, TrainData};
use rfdc::Error;

fn small_backbone() -> BackboneConfig {
    BackboneConfig { channels: 8, bottleneck: 4, hyper_channels: 4, ..BackboneConfig::toy() }
}

fn plain(steps: usize) -> TrainConfig {
    TrainConfig {
        frozen_front: false,
        steps,
        batch_size: 2,
        crop: 32,
        log_every: 10,
        lr: 1e-3,
        model: RfdConfig::baseline(small_backbone()),
        ..TrainConfig::default()
    }
}

fn losses(cfg: &TrainConfig, data: &TrainData, seed: u64) -> Vec<MetricRow> {
    let mut model = initial_model(cfg).unwrap();
    let mut rows = Vec::new();
    train_run(&mut model, data, None, cfg, 128.0, cfg.steps, seed, |r| {
        rows.push(*r);
        Ok(())
    })
    .unwrap();
    rows
}

#[test]
fn same_seed_same_loss_at_step_100() {
    let data = TrainData::from_images(&underwater_set(4, 4, 8, 32, 32).unwrap()).unwrap();
    let cfg = plain(101);
    let a = losses(&cfg, &data, 5);
    let b = losses(&cfg, &data, 5);
    let at = |rows: &[MetricRow]| rows.iter().find(|r| r.step == 100).copied().unwrap();
    assert!((at(&a).loss - at(&b).loss).abs() < 1e-6);
    let c = losses(&cfg, &data, 6);
    assert_ne!(at(&a).loss, at(&c).loss);
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let data = TrainData::from_images(&underwater_set(2, 2, 1, 32, 32).unwrap()).unwrap();
    let cfg = plain(3);
    let mut model = RfdModel::new(cfg.model_config(), 0).unwrap();
    let id = model.params.expect("synthesis.proj.b");
    model.params.tensor_mut(id).data_mut()[0] = f64::NAN;
    match train_run(&mut model, &data, None, &cfg, 64.0, 3, 0, |_| Ok(())) {
        Err(Error::NonFiniteLoss { step, diagnostics }) => {
            assert_eq!(step, 0);
            assert!(diagnostics.contains("lambda 64") && diagnostics.contains("loss NaN"), "{diagnostics}");
        }
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn reference_training_leaves_dictionary_and_front_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let images = underwater_set(4, 4, 2, 32, 32).unwrap();
    let data = TrainData::from_images(&images).unwrap();
    let base = train_ladder(&plain(5), &data, None, &dir.path().join("bb")).unwrap();
    let bb = rfdc::codec::Backbone::load(&base.checkpoints[0]).unwrap();
    let build = BuildConfig { groups: 4, patch_size: 32, kmeans: KMeansConfig { k: 2, ..Default::default() }, ..Default::default() };
    let dict = build_dictionary(&images, &bb, &build).unwrap().dictionary;
    let before = dict.to_bytes();
    let mut model_cfg = RfdConfig::toy();
    model_cfg.backbone = small_backbone();
    let cfg = TrainConfig {
        backbone: Some(base.checkpoints[0].clone()),
        frozen_front: true,
        lambdas: vec![32.0, 512.0],
        steps: 4,
        model: model_cfg,
        ..plain(4)
    };
    let out = train_ladder(&cfg, &data, Some(&dict), &dir.path().join("rfd")).unwrap();
    assert_eq!(dict.to_bytes(), before);
    for s in &out.summaries {
        assert_eq!(s.front_digest_before, s.front_digest_after);
    }
    let first = RfdModel::load(&out.checkpoints[0]).unwrap();
    let last = RfdModel::load(&out.checkpoints[1]).unwrap();
    assert_eq!(first.params.digest("front."), last.params.digest("front."));
    assert_ne!(first.params.digest("synthesis."), last.params.digest("synthesis."));
}

/// Mean MSE falls and mean bpp rises with lambda for most pairs of ladder points.
#[test]
fn ladder_trades_rate_for_distortion() {
    let dir = tempfile::tempdir().unwrap();
    let images = underwater_set(4, 8, 4, 32, 32).unwrap();
    let data = TrainData::from_images(&images).unwrap();
    let cfg = TrainConfig { lambdas: LAMBDA_LADDER.to_vec(), steps: 300, warm_steps: Some(150), ..plain(300) };
    let out = train_ladder(&cfg, &data, None, dir.path()).unwrap();
    let models: Vec<RfdModel> = out.checkpoints.iter().map(|p| RfdModel::load(p).unwrap()).collect();
    let named: Vec<(String, rfdc::Image)> = images.into_iter().enumerate().map(|(i, m)| (i.to_string(), m)).collect();
    let mut points = Vec::new();
    for m in &models {
        let rows = run_eval(std::slice::from_ref(m), None, &named, &Ablation::default(), "p").unwrap().rows;
        let n = rows.len() as f64;
        let bpp = rows.iter().map(|r| r.bpp).sum::<f64>() / n;
        let mse = rows.iter().map(|r| 10f64.powf(-r.psnr / 10.0)).sum::<f64>() / n;
        points.push((m.lambda, bpp, mse));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut pairs, mut ordered_mse, mut ordered_bpp) = (0, 0, 0);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            pairs += 1;
            ordered_mse += (points[j].2 <= points[i].2) as usize;
            ordered_bpp += (points[j].1 >= points[i].1) as usize;
        }
    }
    let summary: Vec<String> =
        points.iter().map(|(l, b, m)| format!("lambda {l}: {b:.4} bpp, {:.2} dB", psnr_from_mse(*m, 1.0))).collect();
    assert!(2 * ordered_mse > pairs && 2 * ordered_bpp > pairs, "{}", summary.join("; "));
}
