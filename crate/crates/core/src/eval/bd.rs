//! Bjøntegaard deltas over monotone piecewise-cubic (PCHIP) interpolants in
//! the `(log2 bpp, PSNR)` plane.

use serde::{Deserialize, Serialize};

use super::curve::RDCurve;
use crate::error::{Error, Result};

/// Default rate ceiling for the extreme-compression regime.
pub const DEFAULT_BPP_MAX: f64 = 0.1;
pub const MIN_POINTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BDResult {
    pub bd_rate_percent: f64,
    pub bd_psnr_db: f64,
    pub anchor: String,
    /// PSNR interval the rate difference was averaged over.
    pub psnr_interval: [f64; 2],
    /// `log2 bpp` interval the PSNR difference was averaged over.
    pub log_rate_interval: [f64; 2],
}

/// Shape-preserving Hermite interpolant through strictly increasing `x`.
#[derive(Clone, Debug)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::Domain(format!("interpolation needs at least two points, got {n}")));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("interpolation abscissae must be strictly increasing".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d = vec![delta[0]; 2];
        } else {
            for k in 1..n - 1 {
                let (a, b) = (delta[k - 1], delta[k]);
                if a * b > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / a + w2 / b);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Pchip { x: x.to_vec(), y: y.to_vec(), d })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn segment(&self, t: f64) -> usize {
        self.x.partition_point(|&v| v <= t).clamp(1, self.x.len() - 1) - 1
    }

    /// Coefficients of `y_k + d_k s + c2 s^2 + c3 s^3`, `s = t - x_k`.
    fn coeffs(&self, k: usize) -> [f64; 4] {
        let h = self.x[k + 1] - self.x[k];
        let delta = (self.y[k + 1] - self.y[k]) / h;
        let c2 = (3.0 * delta - 2.0 * self.d[k] - self.d[k + 1]) / h;
        let c3 = (self.d[k] + self.d[k + 1] - 2.0 * delta) / (h * h);
        [self.y[k], self.d[k], c2, c3]
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.segment(t);
        let [a, b, c, d] = self.coeffs(k);
        let s = t - self.x[k];
        a + s * (b + s * (c + s * d))
    }

    /// Exact integral over `[lo, hi]` inside the domain.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let prim = |c: [f64; 4], s: f64| s * (c[0] + s * (c[1] / 2.0 + s * (c[2] / 3.0 + s * c[3] / 4.0)));
        let mut total = 0.0;
        for k in 0..self.x.len() - 1 {
            let a = lo.max(self.x[k]);
            let b = hi.min(self.x[k + 1]);
            if b > a {
                let c = self.coeffs(k);
                total += prim(c, b - self.x[k]) - prim(c, a - self.x[k]);
            }
        }
        total
    }
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

fn filtered(curve: &RDCurve, bpp_max: f64) -> Result<Vec<[f64; 2]>> {
    curve.validate()?;
    let pts: Vec<[f64; 2]> = curve.points.iter().copied().filter(|p| p[0] < bpp_max).collect();
    if pts.len() < MIN_POINTS {
        return Err(Error::Domain(format!(
            "curve `{}` keeps {} points below {bpp_max} bpp; at least {MIN_POINTS} are needed",
            curve.label,
            pts.len()
        )));
    }
    Ok(pts)
}

fn psnr_axis(label: &str, pts: &[[f64; 2]]) -> Result<Pchip> {
    let mut by_psnr: Vec<(f64, f64)> = pts.iter().map(|p| (p[1], p[0].log2())).collect();
    by_psnr.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (x, y): (Vec<f64>, Vec<f64>) = by_psnr.into_iter().unzip();
    Pchip::new(&x, &y).map_err(|_| Error::Domain(format!("curve `{label}` has repeated PSNR values")))
}

fn common(a: (f64, f64), b: (f64, f64), what: &str) -> Result<(f64, f64)> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if hi <= lo {
        return Err(Error::Overlap(format!("{what} ranges [{}, {}] and [{}, {}] are disjoint", a.0, a.1, b.0, b.1)));
    }
    Ok((lo, hi))
}

/// BD-rate (percent, negative = fewer bits than the anchor) and BD-PSNR (dB)
/// of `curve` against `anchor`, both restricted to points below `bpp_max`.
pub fn bd_metrics(curve: &RDCurve, anchor: &RDCurve, bpp_max: f64) -> Result<BDResult> {
    let c = filtered(curve, bpp_max)?;
    let a = filtered(anchor, bpp_max)?;

    let rc = psnr_axis(&curve.label, &c)?;
    let ra = psnr_axis(&anchor.label, &a)?;
    let (plo, phi) = common(rc.domain(), ra.domain(), "PSNR")?;
    let mean_log_diff = (rc.integrate(plo, phi) - ra.integrate(plo, phi)) / (phi - plo);

    let lr = |pts: &[[f64; 2]]| -> (Vec<f64>, Vec<f64>) { pts.iter().map(|p| (p[0].log2(), p[1])).unzip() };
    let (xc, yc) = lr(&c);
    let (xa, ya) = lr(&a);
    let qc = Pchip::new(&xc, &yc)?;
    let qa = Pchip::new(&xa, &ya)?;
    let (rlo, rhi) = common(qc.domain(), qa.domain(), "log-rate")?;
    let mean_psnr_diff = (qc.integrate(rlo, rhi) - qa.integrate(rlo, rhi)) / (rhi - rlo);

    Ok(BDResult {
        bd_rate_percent: 100.0 * (mean_log_diff.exp2() - 1.0),
        bd_psnr_db: mean_psnr_diff,
        anchor: anchor.label.clone(),
        psnr_interval: [plo, phi],
        log_rate_interval: [rlo, rhi],
    })
}
