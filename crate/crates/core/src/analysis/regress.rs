//! Small least-squares helpers.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares `y = a + b x`. The slope error uses the residual
/// variance, so an exact line reports zero.
pub fn line_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let dof = (xs.len() as f64 - 2.0).max(1.0);
    LineFit {
        slope,
        intercept,
        slope_stderr: (rss / dof / sxx).sqrt(),
    }
}

/// Weighted least squares with known per-point standard errors; the slope
/// error is the formal one, 1/sqrt(Σ w (x - x̄_w)^2).
pub fn weighted_line_fit(xs: &[f64], ys: &[f64], sds: &[f64]) -> LineFit {
    let ws: Vec<f64> = sds.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = ws.iter().sum();
    let mx = ws.iter().zip(xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = ws.iter().zip(ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = ws.iter().zip(xs).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = ws
        .iter()
        .zip(xs.iter().zip(ys))
        .map(|(w, (x, y))| w * (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    LineFit {
        slope,
        intercept: my - slope * mx,
        slope_stderr: (1.0 / sxx).sqrt(),
    }
}
