use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of a logarithmic frequency grid in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub include_zero: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            min: 1e-3,
            max: 1e3,
            points: 400,
            include_zero: true,
            extra: Vec::new(),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.max > self.min && self.max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid bounds must satisfy 0 < min < max < inf, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.points < 2 {
            return Err(Error::InvalidParameter("grid needs at least 2 points".into()));
        }
        if let Some(w) = self.extra.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(format!("extra grid frequency {w} is invalid")));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<FrequencyGrid> {
        self.validate()?;
        let (lo, hi) = (self.min.log10(), self.max.log10());
        let step = (hi - lo) / (self.points - 1) as f64;
        let mut pts: Vec<f64> = (0..self.points).map(|i| 10f64.powf(lo + step * i as f64)).collect();
        if self.include_zero {
            pts.push(0.0);
        }
        pts.extend(self.extra.iter().copied());
        Ok(FrequencyGrid::from_points(pts))
    }
}

/// Sorted, de-duplicated set of nonnegative frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl FrequencyGrid {
    pub fn from_points(mut points: Vec<f64>) -> Self {
        points.retain(|w| w.is_finite() && *w >= 0.0);
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        points.dedup();
        Self { points }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Frequencies strictly between `points[idx]` and its neighbours,
    /// `per_side` on each side, spaced geometrically (linearly next to 0).
    pub fn refinement_around(&self, idx: usize, per_side: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let w = self.points[idx];
        let mut fill = |a: f64, b: f64| {
            for q in 1..=per_side {
                let t = q as f64 / (per_side + 1) as f64;
                let x = if a > 0.0 { a * (b / a).powf(t) } else { a + (b - a) * t };
                out.push(x);
            }
        };
        if idx > 0 {
            fill(self.points[idx - 1], w);
        }
        if idx + 1 < self.points.len() {
            fill(w, self.points[idx + 1]);
        }
        out
    }
}
