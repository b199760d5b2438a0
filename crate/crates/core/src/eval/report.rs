//! Report directory: R-D plot, BD table and machine-readable curves.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use super::bd::{bd_metrics, BDResult};
use super::curve::RDCurve;
use crate::error::{Error, Result};

/// One row of the BD table; `error` explains a missing comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BDRow {
    pub label: String,
    pub result: Option<BDResult>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub anchor: String,
    pub bpp_max: f64,
    pub curves: Vec<RDCurve>,
    pub bd: Vec<BDRow>,
}

#[derive(Clone, Debug)]
pub struct ReportFiles {
    pub plot: PathBuf,
    pub markdown: PathBuf,
    pub json: PathBuf,
}

/// Every curve except the anchor, compared against it.
pub fn bd_table(curves: &[RDCurve], anchor: &RDCurve, bpp_max: f64) -> Vec<BDRow> {
    curves
        .iter()
        .filter(|c| *c != anchor)
        .map(|c| match bd_metrics(c, anchor, bpp_max) {
            Ok(r) => BDRow { label: c.label.clone(), result: Some(r), error: None },
            Err(e) => BDRow { label: c.label.clone(), result: None, error: Some(e.to_string()) },
        })
        .collect()
}

fn plot(curves: &[RDCurve], path: &Path) -> std::result::Result<(), Box<dyn std::error::Error>> {
    let pts = curves.iter().flat_map(|c| c.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in pts {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (px, py) = (((x1 - x0) * 0.05).max(1e-3), ((y1 - y0) * 0.05).max(0.1));
    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .caption("Rate-distortion", ("sans-serif", 22))
        .build_cartesian_2d((x0 - px)..(x1 + px), (y0 - py)..(y1 + py))?;
    chart.configure_mesh().x_desc("bpp").y_desc("PSNR (dB)").draw()?;
    for (i, c) in curves.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let series: Vec<(f64, f64)> = c.points.iter().map(|p| (p[0], p[1])).collect();
        chart
            .draw_series(LineSeries::new(series.clone(), color.stroke_width(2)))?
            .label(c.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart.draw_series(series.into_iter().map(|p| Circle::new(p, 3, color.filled())))?;
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

fn markdown(report: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Rate-distortion report\n");
    let _ = writeln!(s, "Anchor: `{}`. BD metrics use points below {} bpp.\n", report.anchor, report.bpp_max);
    let _ = writeln!(s, "## Curves\n");
    for c in &report.curves {
        let _ = writeln!(s, "### {}\n\n| bpp | PSNR (dB) |\n|---:|---:|", c.label);
        for p in &c.points {
            let _ = writeln!(s, "| {:.4} | {:.3} |", p[0], p[1]);
        }
        s.push('\n');
    }
    let _ = writeln!(s, "## BD metrics\n\n| curve | BD-rate (%) | BD-PSNR (dB) |\n|---|---:|---:|");
    for row in &report.bd {
        match (&row.result, &row.error) {
            (Some(r), _) => {
                let _ = writeln!(s, "| {} | {:.2} | {:.3} |", row.label, r.bd_rate_percent, r.bd_psnr_db);
            }
            (None, e) => {
                let _ = writeln!(s, "| {} | n/a | n/a ({}) |", row.label, e.as_deref().unwrap_or("unavailable"));
            }
        }
    }
    s
}

/// Writes `rd.svg`, `report.md` and `report.json` into `out`. Without an
/// explicit anchor the first curve is used.
pub fn emit_report(curves: &[RDCurve], anchor: Option<&RDCurve>, bpp_max: f64, out: &Path) -> Result<ReportFiles> {
    let first = curves.first().ok_or_else(|| Error::Configuration("report needs at least one curve".into()))?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let anchor = anchor.unwrap_or(first);
    let mut all: Vec<RDCurve> = curves.to_vec();
    if !all.contains(anchor) {
        all.push(anchor.clone());
    }
    let report = Report { anchor: anchor.label.clone(), bpp_max, bd: bd_table(curves, anchor, bpp_max), curves: all };
    let files = ReportFiles { plot: out.join("rd.svg"), markdown: out.join("report.md"), json: out.join("report.json") };
    plot(&report.curves, &files.plot).map_err(|e| Error::Format(format!("plot: {e}")))?;
    std::fs::write(&files.markdown, markdown(&report)).map_err(|e| Error::io(&files.markdown, e))?;
    std::fs::write(&files.json, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&files.json, e))?;
    for c in &report.curves {
        let safe: String = c.label.chars().map(|ch| if ch.is_ascii_alphanumeric() || ch == '-' { ch } else { '_' }).collect();
        c.save(out.join(format!("curve_{safe}.json")))?;
    }
    Ok(files)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let r: Report = serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
    for c in &r.curves {
        c.validate()?;
    }
    Ok(r)
}
