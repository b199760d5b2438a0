//! Drives the `uwsim` and `rfdc` binaries end to end on a tiny synthetic set.

use std::path::Path;
use std::process::{Command, Output};

use rfdc::codec::BackboneConfig;
use rfdc::rfd::RfdConfig;
use rfdc::synthetic::underwater_set;
use rfdc::training::TrainConfig;
use rfdc::Image;

fn run(bin: &str, args: &[&str]) -> Output {
    let out = Command::new(bin).args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "{bin} {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn rfdc(args: &[&str]) -> Output {
    run(env!("CARGO_BIN_EXE_rfdc"), args)
}

fn uwsim(args: &[&str]) -> Output {
    run(env!("CARGO_BIN_EXE_uwsim"), args)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn uwsim_degrade_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let clear = dir.path().join("clear.png");
    let hazy = dir.path().join("hazy.png");
    Image::from_fn(24, 40, |c, y, x| 0.2 + 0.6 * ((x + y + 7 * c) % 11) as f64 / 11.0).unwrap().save_png(&clear).unwrap();
    uwsim(&["degrade", "--alpha", "0.5,0.1,0.05", "--depth", "3", "--ambient", "0.1,0.5,0.6", s(&clear), s(&hazy)]);
    let img = Image::load(&hazy).unwrap();
    assert_eq!((img.height(), img.width()), (24, 40));
    // the red channel is pulled toward its ambient value
    let red = |im: &Image| (0..24 * 40).map(|i| im.get(0, i / 40, i % 40)).sum::<f64>() / 960.0;
    assert!(red(&img) < red(&Image::load(&clear).unwrap()));

    let json = dir.path().join("priors.json");
    uwsim(&["estimate", s(&hazy), "--out", s(&json)]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["A"].as_array().unwrap().len(), 3);
    let t = dir.path().join(v["T"].as_str().unwrap());
    assert_eq!(std::fs::metadata(t).unwrap().len(), 4 * 3 * 24 * 40);
}

#[test]
fn uwsim_rejects_bad_triples() {
    let out = Command::new(env!("CARGO_BIN_EXE_uwsim"))
        .args(["degrade", "--alpha", "0.5,0.1", "--depth", "3", "--ambient", "0.1,0.5,0.6", "a.png", "b.png"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn build_train_eval_and_code() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    std::fs::create_dir(&data).unwrap();
    for (i, img) in underwater_set(4, 4, 3, 32, 32).unwrap().iter().enumerate() {
        img.save_png(data.join(format!("img{i}.png"))).unwrap();
    }

    // plain codec first; its checkpoint serves as the backbone
    let base = TrainConfig {
        frozen_front: false,
        lambdas: vec![128.0],
        steps: 2,
        batch_size: 2,
        crop: 32,
        log_every: 1,
        lr: 1e-3,
        model: RfdConfig::baseline(BackboneConfig::toy()),
        ..TrainConfig::default()
    };
    let base_toml = root.join("base.toml");
    std::fs::write(&base_toml, base.to_toml()).unwrap();
    rfdc(&["train", "--config", s(&base_toml), "--data", s(&data), "--out", s(&root.join("bb"))]);
    let backbone = root.join("bb/lambda_128.ckpt");
    assert!(backbone.exists());

    let dict = root.join("dict.uwfd");
    let report = root.join("diversity.csv");
    rfdc(&[
        "build-dict", "--corpus", s(&data), "--k", "2", "--groups", "3", "--scales", "2,3,4", "--patch", "32", "--backbone",
        s(&backbone), "--out", s(&dict), "--report", s(&report),
    ]);
    assert_eq!(csv_header(&report), "image_id,patch_row,patch_col,si,cf");

    let cfg = TrainConfig {
        backbone: Some(backbone.clone()),
        lambdas: vec![64.0, 256.0],
        steps: 2,
        batch_size: 2,
        crop: 32,
        log_every: 1,
        lr: 1e-3,
        model: RfdConfig::toy(),
        ..TrainConfig::default()
    };
    let cfg_toml = root.join("rfd.toml");
    std::fs::write(&cfg_toml, cfg.to_toml()).unwrap();
    let ckpts = root.join("ckpt");
    rfdc(&["train", "--config", s(&cfg_toml), "--dict", s(&dict), "--data", s(&data), "--out", s(&ckpts)]);
    assert_eq!(csv_header(&ckpts.join("metrics_lambda64.csv")), "step,loss,bpp_est,mse");
    assert!(ckpts.join("lambda_256.ckpt").exists());

    let rep = root.join("report");
    rfdc(&[
        "eval", "--ckpts", s(&ckpts), "--dict", s(&dict), "--data", s(&data), "--ablate", "no-usnb", "--bpp-max", "10", "--out",
        s(&rep),
    ]);
    for f in ["rd.svg", "report.md", "report.json", "curve_full.json", "curve_no-usnb.json", "per_image_full.csv"] {
        assert!(rep.join(f).exists(), "{f} missing");
    }
    let curve: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(rep.join("curve_full.json")).unwrap()).unwrap();
    assert_eq!(curve["label"], "full");
    assert_eq!(curve["points"].as_array().unwrap().len(), 2);

    let ckpt = ckpts.join("lambda_64.ckpt");
    let input = data.join("img0.png");
    let packed = root.join("img0.rfdc");
    let decoded = root.join("img0_dec.png");
    rfdc(&["encode", "--ckpt", s(&ckpt), "--dict", s(&dict), s(&input), s(&packed)]);
    let out = rfdc(&["inspect", s(&packed)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let bits = v["bits_z"].as_u64().unwrap() + v["bits_W"].as_u64().unwrap() + v["bits_index"].as_u64().unwrap();
    let file_bits = 8 * std::fs::metadata(&packed).unwrap().len();
    assert!(bits <= file_bits && file_bits - bits < 8);
    assert_eq!(v["dims"], serde_json::json!([32, 32]));
    assert!((v["bpp"].as_f64().unwrap() - bits as f64 / 1024.0).abs() < 1e-12);
    rfdc(&["decode", "--ckpt", s(&ckpt), "--dict", s(&dict), s(&packed), s(&decoded)]);
    assert_eq!(Image::load(&decoded).unwrap().height(), 32);

    // ablated encode produces a container the full checkpoint still decodes
    let lean = root.join("lean.rfdc");
    rfdc(&["encode", "--ckpt", s(&ckpt), "--dict", s(&dict), "--no-rfvm", "--scales", "2", s(&input), s(&lean)]);
    assert!(std::fs::metadata(&lean).unwrap().len() < std::fs::metadata(&packed).unwrap().len());
    rfdc(&["decode", "--ckpt", s(&ckpt), "--dict", s(&dict), s(&lean), s(&decoded)]);
}
