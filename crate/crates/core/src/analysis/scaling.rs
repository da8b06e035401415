//! Power-law exponents versus atom number.

use crate::error::{Error, Result};

use super::regress::line_fit;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub exponent: f64,
    pub stderr: f64,
    /// Prefactor a in value = a · N^exponent.
    pub prefactor: f64,
}

/// Least-squares slope of log(value) against log(N).
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "scaling fit needs >= 4 points, got {}",
            points.len()
        )));
    }
    if let Some(&(n, v)) = points.iter().find(|(n, v)| !(*n > 0.0 && *v > 0.0)) {
        return Err(Error::invalid(format!(
            "nonpositive point (N = {n}, value = {v})"
        )));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if hi / lo < 100.0 * (1.0 - 1e-9) {
        return Err(Error::InsufficientData(format!(
            "N spans {lo}..{hi}; need at least two decades"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let f = line_fit(&xs, &ys);
    Ok(ScalingFit {
        exponent: f.slope,
        stderr: f.slope_stderr,
        prefactor: f.intercept.exp(),
    })
}
