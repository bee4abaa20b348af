//! Small descriptive statistics: macro mean ± population std, Pearson.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("series have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("series contain a non-finite value")]
    NonFinite,
}

/// Mean and population standard deviation of a set of per-relation values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl fmt::Display for Summary {
    /// Two decimals, e.g. `0.74 ±0.15`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ±{:.2}", self.mean + 0.0, self.std + 0.0)
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Unweighted mean and population (divide by N) std. `None` if empty.
pub fn macro_summary(xs: &[f64]) -> Option<Summary> {
    let m = mean(xs)?;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    Some(Summary {
        mean: m,
        std: var.sqrt(),
        n: xs.len(),
    })
}

/// Same as [`macro_summary`] over the present values only.
pub fn macro_summary_present(xs: impl IntoIterator<Item = Option<f64>>) -> Option<Summary> {
    let v: Vec<f64> = xs.into_iter().flatten().collect();
    macro_summary(&v)
}

/// Renders an optional summary, with `-` for absent.
pub fn fmt_summary(s: Option<Summary>) -> String {
    s.map(|s| s.to_string()).unwrap_or_else(|| "-".to_string())
}

/// Pearson product-moment correlation. `Ok(None)` when either series is
/// constant, since the coefficient is undefined there.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewPoints(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Pearson on a 0/1 flag against a real series (point-biserial).
pub fn pearson_flag(flags: &[bool], y: &[f64]) -> Result<Option<f64>, StatsError> {
    let x: Vec<f64> = flags.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    pearson(&x, y)
}
