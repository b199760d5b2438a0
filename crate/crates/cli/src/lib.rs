//! Argument parsing shared by the `rfdc` and `uwsim` binaries.

use anyhow::{bail, Context, Result};

/// `"a,b,c"` into three floats.
pub fn parse_triple(s: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().with_context(|| format!("`{p}` is not a number"))).collect::<Result<_>>()?;
    match v.as_slice() {
        &[a, b, c] => Ok([a, b, c]),
        _ => bail!("expected three comma-separated values, got {}", v.len()),
    }
}

/// `"2,3,4"` into ascending, deduplicated scales.
pub fn parse_scales(s: &str) -> Result<Vec<usize>> {
    let mut v: Vec<usize> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("`{p}` is not a scale")))
        .collect::<Result<_>>()?;
    v.sort_unstable();
    v.dedup();
    if v.iter().any(|s| !(2..=4).contains(s)) {
        bail!("scales must lie in 2..=4");
    }
    Ok(v)
}

pub fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
}
