//! PSNR, R-D curves, Bjøntegaard metrics and report emission.

pub mod bd;
pub mod curve;
pub mod harness;
pub mod report;

pub use bd::{bd_metrics, BDResult, Pchip, DEFAULT_BPP_MAX};
pub use curve::RDCurve;
pub use harness::{load_checkpoints, load_images, psnr, psnr_from_mse, run_eval, write_rows, EvalOutput, ImageResult};
pub use report::{bd_table, emit_report, load_report, BDRow, Report, ReportFiles};
