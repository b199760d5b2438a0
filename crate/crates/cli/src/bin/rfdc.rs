//! Dictionary construction, training, coding and evaluation for the reference-feature codec.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rfdc::bitstream::container::inspect;
use rfdc::codec::Backbone;
use rfdc::dictionary::{build_to_files, load_corpus, load_dictionary, BuildConfig, FeatureDictionary, KMeansConfig};
use rfdc::eval::{emit_report, load_checkpoints, load_images, run_eval, write_rows, RDCurve, DEFAULT_BPP_MAX};
use rfdc::rfd::{Ablation, RfdModel};
use rfdc::training::{train_ladder, TrainConfig, TrainData};
use rfdc::Image;
use rfdc_cli::{init_logging, parse_scales};

#[derive(Parser)]
#[command(name = "rfdc", version, about = "Dictionary-referenced image codec")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Parsed as one comma-separated value; an alias keeps clap from treating it as a list argument.
type ScaleList = Vec<usize>;

#[derive(Args, Clone, Default)]
struct AblationArgs {
    /// Drop style normalisation of dictionary entries.
    #[arg(long)]
    no_usnb: bool,
    /// Drop the dependency map and recursive filter.
    #[arg(long)]
    no_rfvm: bool,
    /// Keep only these reference scales, e.g. `2,3`.
    #[arg(long, value_parser = parse_scales)]
    scales: Option<ScaleList>,
}

impl AblationArgs {
    fn ablation(&self, extra: &[String]) -> Result<Ablation> {
        let mut a = Ablation { no_usnb: self.no_usnb, no_rfvm: self.no_rfvm, scales: self.scales.clone() };
        for item in extra.iter().flat_map(|s| s.split(',')) {
            match item.trim() {
                "no-usnb" => a.no_usnb = true,
                "no-rfvm" => a.no_rfvm = true,
                "" => {}
                other => bail!("unknown ablation `{other}` (expected no-usnb or no-rfvm)"),
            }
        }
        Ok(a)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Builds the multi-scale feature dictionary from a corpus of PNGs.
    BuildDict {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 128)]
        k: usize,
        #[arg(long, default_value_t = 300)]
        groups: usize,
        #[arg(long, default_value = "2,3,4", value_parser = parse_scales)]
        scales: ScaleList,
        #[arg(long, default_value_t = 128)]
        patch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        backbone: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Trains one checkpoint per lambda of the config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Required unless the config trains the plain (reference-free) codec.
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encodes and decodes a dataset with every checkpoint and writes an R-D report.
    Eval {
        #[arg(long)]
        ckpts: PathBuf,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Curve JSON the BD metrics are computed against.
        #[arg(long)]
        anchor: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BPP_MAX)]
        bpp_max: f64,
        /// Additional variant to evaluate: `no-usnb`, `no-rfvm` (repeatable or comma-separated).
        #[arg(long)]
        ablate: Vec<String>,
        #[command(flatten)]
        switches: AblationArgs,
        #[arg(long, default_value = "full")]
        label: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compresses one image into a `.rfdc` container.
    Encode {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[command(flatten)]
        switches: AblationArgs,
        input: PathBuf,
        output: PathBuf,
    },
    /// Reconstructs an image from a `.rfdc` container.
    Decode {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dict: Option<PathBuf>,
        input: PathBuf,
        output: PathBuf,
    },
    /// Prints the bit breakdown of a container as JSON.
    Inspect { file: PathBuf },
}

fn read_dict(path: &Option<PathBuf>) -> Result<Option<FeatureDictionary>> {
    path.as_ref().map(|p| load_dictionary(p).with_context(|| format!("loading {}", p.display()))).transpose()
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<()> {
    init_logging();
    match Cli::parse().cmd {
        Cmd::BuildDict { corpus, k, groups, scales, patch, seed, backbone, out, report } => {
            let bb = Backbone::load(&backbone).with_context(|| format!("loading {}", backbone.display()))?;
            let images = load_corpus(&corpus)?;
            let cfg = BuildConfig {
                groups,
                scales,
                patch_size: patch,
                kmeans: KMeansConfig { k, seed, ..KMeansConfig::default() },
                ..BuildConfig::default()
            };
            let built = build_to_files(&images, &bb, &cfg, &out, report.as_deref())?;
            eprintln!("{} entries per scale from {} images", built.dictionary.k, built.chosen.len());
        }
        Cmd::Train { config, dict, data, out } => {
            let cfg = TrainConfig::load(&config)?;
            let dict = read_dict(&dict)?;
            let data = TrainData::load_dir(&data)?;
            let result = train_ladder(&cfg, &data, dict.as_ref(), &out)?;
            for (ck, s) in result.checkpoints.iter().zip(&result.summaries) {
                println!("{}\tloss {:.5} -> {:.5}", ck.display(), s.initial.loss, s.last.loss);
            }
        }
        Cmd::Eval { ckpts, dict, data, anchor, bpp_max, ablate, switches, label, out } => {
            let models = load_checkpoints(&ckpts)?;
            let dict = read_dict(&dict)?;
            let images = load_images(&data)?;
            let anchor = anchor.map(RDCurve::load).transpose()?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut variants = vec![(label, Ablation::default())];
            let extra = switches.ablation(&ablate)?;
            if extra != Ablation::default() {
                variants.push((extra.label(), extra));
            }
            let mut curves = Vec::new();
            for (name, ab) in &variants {
                let result = run_eval(&models, dict.as_ref(), &images, ab, name)?;
                write_rows(&result.rows, out.join(format!("per_image_{name}.csv")))?;
                curves.push(result.curve);
            }
            let files = emit_report(&curves, anchor.as_ref(), bpp_max, &out)?;
            println!("{}", std::fs::read_to_string(&files.markdown)?);
        }
        Cmd::Encode { ckpt, dict, switches, input, output } => {
            let model = RfdModel::load(&ckpt)?.with_ablation(&switches.ablation(&[])?)?;
            let dict = read_dict(&dict)?;
            let img = Image::load(&input).with_context(|| format!("reading {}", input.display()))?;
            let enc = model.encode(&img, dict.as_ref())?;
            std::fs::write(&output, &enc.bytes).with_context(|| format!("writing {}", output.display()))?;
            println!("{}", serde_json::to_string(&inspect(&enc.bytes)?)?);
        }
        Cmd::Decode { ckpt, dict, input, output } => {
            let model = RfdModel::load(&ckpt)?;
            let dict = read_dict(&dict)?;
            model.decode(&read_bytes(&input)?, dict.as_ref())?.save_png(&output)?;
        }
        Cmd::Inspect { file } => {
            println!("{}", serde_json::to_string(&inspect(&read_bytes(&file)?)?)?);
        }
    }
    Ok(())
}
