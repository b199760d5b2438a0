//! Underwater image formation: synthesise a degraded capture, or estimate priors from one.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use rfdc::physical::{degrade, estimate_priors, DepthMap, UnderwaterPriors};
use rfdc::priors_file::{read_depth, save_priors, MapFormat};
use rfdc::Image;
use rfdc_cli::{init_logging, parse_triple};

#[derive(Parser)]
#[command(name = "uwsim", version, about = "Underwater scattering model tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    F32,
    Png16,
}

#[derive(Subcommand)]
enum Cmd {
    /// Applies `I = J T + A (1 - T)` with `T = exp(-alpha d)`.
    Degrade {
        #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
        alpha: [f64; 3],
        /// Constant distance, or a depth map (.png16 in thousandths, or .f32).
        #[arg(long)]
        depth: String,
        #[arg(long, value_parser = parse_triple)]
        ambient: [f64; 3],
        input: PathBuf,
        output: PathBuf,
    },
    /// Dark-channel estimate of ambient light and transmission.
    Estimate {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "f32")]
        format: Format,
    },
}

fn main() -> Result<()> {
    init_logging();
    match Cli::parse().cmd {
        Cmd::Degrade { alpha, depth, ambient, input, output } => {
            let clear = Image::load(&input).with_context(|| format!("reading {}", input.display()))?;
            let (h, w) = (clear.height(), clear.width());
            let d = match depth.parse::<f64>() {
                Ok(v) => DepthMap::constant(h, w, v)?,
                Err(_) => read_depth(PathBuf::from(&depth).as_path(), Some((h, w)))?,
            };
            let priors = UnderwaterPriors::from_depth(alpha, d, ambient)?;
            degrade(&clear, &priors)?.save_png(&output)?;
        }
        Cmd::Estimate { input, out, format } => {
            let img = Image::load(&input).with_context(|| format!("reading {}", input.display()))?;
            let priors = estimate_priors(&img);
            let fmt = match format {
                Format::F32 => MapFormat::F32,
                Format::Png16 => MapFormat::Png16,
            };
            save_priors(&priors, &out, fmt)?;
        }
    }
    Ok(())
}
