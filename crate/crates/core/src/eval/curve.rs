use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rate-distortion points `[bpp, psnr_db]` of one codec configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RDCurve {
    pub label: String,
    pub points: Vec<[f64; 2]>,
}

impl RDCurve {
    pub fn new(label: impl Into<String>, points: Vec<[f64; 2]>) -> Result<Self> {
        let c = RDCurve { label: label.into(), points };
        c.validate()?;
        Ok(c)
    }

    /// Builds a curve from unordered points.
    pub fn from_unsorted(label: impl Into<String>, mut points: Vec<[f64; 2]>) -> Result<Self> {
        points.sort_by(|a, b| a[0].total_cmp(&b[0]));
        RDCurve::new(label, points)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.points.iter().find(|p| !(p[0] > 0.0 && p[0].is_finite()) || !p[1].is_finite()) {
            return Err(Error::Domain(format!("curve `{}` has invalid point ({}, {})", self.label, p[0], p[1])));
        }
        if self.points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(Error::Domain(format!("curve `{}` is not sorted by strictly increasing bpp", self.label)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("curve serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: RDCurve = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        RDCurve::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape_and_round_trip() {
        assert!(RDCurve::from_unsorted("x", vec![[0.3, 30.1], [0.3, 29.0]]).is_err());
        let c = RDCurve::from_unsorted("x", vec![[0.05, 27.123456789012345], [0.01 / 3.0, 22.0]]).unwrap();
        assert_eq!(c.points[0][0], 0.01 / 3.0);
        let v: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(v["points"][1][1], 27.123456789012345);
        let back = RDCurve::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert!(RDCurve::from_json(r#"{"label":"u","points":[[0.2,1.0],[0.1,2.0]]}"#).is_err());
        assert!(RDCurve::new("n", vec![[0.1, f64::INFINITY]]).is_err());
    }
}
