//! Averaged-frequency stability σ_y(τ) and its white floor.

use std::sync::Arc;

use crate::clockloop::ClockTrace;
use crate::error::{Error, Result};
use crate::lonoise::accumulate_phase;
use crate::registry::{Named, Registry};

use super::regress::weighted_line_fit;

/// Default lower edge of the floor fit, in Ramsey cycles.
pub const DEFAULT_FLOOR_MIN_CYCLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityPoint {
    pub tau: f64,
    pub sigma_y: f64,
    pub stderr: f64,
    /// Number of averaged values behind this point.
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorFit {
    /// c in σ_y = c / sqrt(τ).
    pub coeff: f64,
    pub stderr: f64,
    /// Log-log slope over the fit range and its error.
    pub slope: f64,
    pub slope_stderr: f64,
    /// Set when the slope differs from -1/2 by more than 3 standard errors.
    pub flagged: bool,
    pub tau_min: f64,
    pub tau_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCurve {
    pub ramsey_t: f64,
    pub points: Vec<StabilityPoint>,
    pub floor: Option<FloorFit>,
}

impl StabilityCurve {
    pub fn floor_coeff(&self) -> Option<f64> {
        self.floor.map(|f| f.coeff)
    }

    pub fn fit_range(&self) -> Option<(f64, f64)> {
        self.floor.map(|f| (f.tau_min, f.tau_max))
    }
}

/// Turns a trace into averaged frequency offsets δω̄ over non-overlapping
/// segments of `m` cycles. σ_y is the RMS of these values divided by ω.
pub trait StabilityEstimator: Named + Send + Sync {
    fn segment_values(&self, trace: &ClockTrace, m: usize) -> Vec<f64>;
}

/// Σ (φ_k - φ̂_k) / τ: true phase minus the phase the servo has already
/// measured and removed. Equals the slaved average up to the correction
/// still pending at the segment edges.
pub struct Steered;
/// (1/τ) ∫ δω dt over the slaved trajectory.
pub struct TimeAverage;
/// Classical two-sample (Allan) deviation of adjacent segment averages.
pub struct TwoSample;

impl Named for Steered {
    fn name(&self) -> &'static str {
        "steered"
    }
}

impl StabilityEstimator for Steered {
    fn segment_values(&self, trace: &ClockTrace, m: usize) -> Vec<f64> {
        let tau = m as f64 * trace.ramsey_t;
        trace
            .phase_o
            .chunks_exact(m)
            .zip(trace.phase_estimate.chunks_exact(m))
            .map(|(p, e)| p.iter().zip(e).map(|(a, b)| a - b).sum::<f64>() / tau)
            .collect()
    }
}

impl Named for TimeAverage {
    fn name(&self) -> &'static str {
        "time_average"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["mean"]
    }
}

fn slaved_averages(trace: &ClockTrace, m: usize) -> Vec<f64> {
    let tau = m as f64 * trace.ramsey_t;
    let steps = m * trace.steps_per_cycle;
    (0..trace.n_cycles() / m)
        .map(|i| accumulate_phase(&trace.slaved_freq, i * steps, steps).unwrap_or(f64::NAN) / tau)
        .collect()
}

impl StabilityEstimator for TimeAverage {
    fn segment_values(&self, trace: &ClockTrace, m: usize) -> Vec<f64> {
        slaved_averages(trace, m)
    }
}

impl Named for TwoSample {
    fn name(&self) -> &'static str {
        "two_sample"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["allan"]
    }
}

impl StabilityEstimator for TwoSample {
    fn segment_values(&self, trace: &ClockTrace, m: usize) -> Vec<f64> {
        slaved_averages(trace, m)
            .windows(2)
            .map(|w| (w[1] - w[0]) / std::f64::consts::SQRT_2)
            .collect()
    }
}

pub fn stability_estimators() -> Registry<dyn StabilityEstimator> {
    Registry::<dyn StabilityEstimator>::new("stability estimator")
        .with(Arc::new(Steered))
        .with(Arc::new(TimeAverage))
        .with(Arc::new(TwoSample))
}

/// Converts averaging times to whole cycle counts.
pub fn taus_to_cycles(taus: &[f64], ramsey_t: f64, n_cycles: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        let m = (tau / ramsey_t).round();
        if tau.is_nan() || tau <= 0.0 || m < 1.0 || (tau / ramsey_t - m).abs() > 1e-9 * m {
            return Err(Error::invalid(format!(
                "tau = {tau} is not a positive multiple of T = {ramsey_t}"
            )));
        }
        let m = m as usize;
        if m > n_cycles {
            return Err(Error::invalid(format!(
                "tau = {tau} exceeds the run length {}",
                n_cycles as f64 * ramsey_t
            )));
        }
        if out.last().is_some_and(|&p| p >= m) {
            return Err(Error::invalid("taus must be strictly increasing"));
        }
        out.push(m);
    }
    Ok(out)
}

/// Segment lengths (in cycles) spaced roughly `per_decade` per decade from 1
/// to `n_cycles / min_segments`.
pub fn log_spaced_cycles(n_cycles: usize, min_segments: usize, per_decade: usize) -> Vec<usize> {
    let top = (n_cycles / min_segments.max(1)).max(1);
    let mut out = Vec::new();
    let steps = ((top as f64).log10() * per_decade as f64).floor() as usize;
    for i in 0..=steps {
        let m = 10f64.powf(i as f64 / per_decade as f64).round() as usize;
        if out.last() != Some(&m) {
            out.push(m);
        }
    }
    out
}

/// Running sums of squared segment values per averaging length. Partial
/// accumulators from separate trials merge by addition; merging in a fixed
/// order gives results independent of how trials were scheduled.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityAccumulator {
    pub ramsey_t: f64,
    pub cycles: Vec<usize>,
    pub sum_sq: Vec<f64>,
    pub count: Vec<usize>,
}

impl StabilityAccumulator {
    pub fn new(ramsey_t: f64, cycles: Vec<usize>) -> Self {
        let n = cycles.len();
        Self {
            ramsey_t,
            cycles,
            sum_sq: vec![0.0; n],
            count: vec![0; n],
        }
    }

    pub fn add_trace(&mut self, estimator: &dyn StabilityEstimator, trace: &ClockTrace) {
        for (i, &m) in self.cycles.iter().enumerate() {
            let values = estimator.segment_values(trace, m);
            self.sum_sq[i] += values.iter().map(|v| v * v).sum::<f64>();
            self.count[i] += values.len();
        }
    }

    pub fn merge(&mut self, other: &StabilityAccumulator) {
        for i in 0..self.cycles.len() {
            self.sum_sq[i] += other.sum_sq[i];
            self.count[i] += other.count[i];
        }
    }

    pub fn finish(&self, omega: f64) -> Result<StabilityCurve> {
        let mut points = Vec::with_capacity(self.cycles.len());
        for (i, &m) in self.cycles.iter().enumerate() {
            let k = self.count[i];
            if k < 2 {
                return Err(Error::InsufficientData(format!(
                    "tau = {} has {k} segment(s); need at least 2",
                    m as f64 * self.ramsey_t
                )));
            }
            let sigma = (self.sum_sq[i] / k as f64).sqrt() / omega;
            points.push(StabilityPoint {
                tau: m as f64 * self.ramsey_t,
                sigma_y: sigma,
                stderr: sigma / (2.0 * k as f64).sqrt(),
                samples: k,
            });
        }
        Ok(StabilityCurve {
            ramsey_t: self.ramsey_t,
            points,
            floor: None,
        })
    }
}

/// σ_y(τ) over an ensemble of traces using non-overlapping segments.
pub fn allan_deviation(
    traces: &[ClockTrace],
    taus: &[f64],
    omega: f64,
    estimator: &dyn StabilityEstimator,
) -> Result<StabilityCurve> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InsufficientData("no traces".into()))?;
    let n = traces.iter().map(|t| t.n_cycles()).min().unwrap_or(0);
    let cycles = taus_to_cycles(taus, first.ramsey_t, n)?;
    let mut acc = StabilityAccumulator::new(first.ramsey_t, cycles);
    for trace in traces {
        acc.add_trace(estimator, trace);
    }
    acc.finish(omega)
}

/// Weighted least-squares fit of σ_y = c / sqrt(τ) through the origin over
/// points with τ ≥ `min_cycles` · T.
pub fn fit_floor(curve: &StabilityCurve, min_cycles: usize) -> Result<FloorFit> {
    let tau_min = min_cycles as f64 * curve.ramsey_t * (1.0 - 1e-12);
    let pts: Vec<&StabilityPoint> = curve.points.iter().filter(|p| p.tau >= tau_min).collect();
    if pts.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "floor fit needs >= 4 points with tau >= {min_cycles} T, got {}",
            pts.len()
        )));
    }
    // fall back to equal relative weights when any error bar is zero
    let exact = pts.iter().any(|p| p.stderr.is_nan() || p.stderr <= 0.0);
    let sd = |p: &StabilityPoint| {
        if exact {
            p.sigma_y.max(f64::MIN_POSITIVE)
        } else {
            p.stderr
        }
    };

    let (mut sxy, mut sxx) = (0.0, 0.0);
    for p in &pts {
        let x = p.tau.powf(-0.5);
        let w = 1.0 / sd(p).powi(2);
        sxy += w * x * p.sigma_y;
        sxx += w * x * x;
    }
    let coeff = sxy / sxx;

    let xs: Vec<f64> = pts.iter().map(|p| p.tau.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.sigma_y.ln()).collect();
    let rel: Vec<f64> = pts.iter().map(|p| sd(p) / p.sigma_y).collect();
    let line = weighted_line_fit(&xs, &ys, &rel);
    let flagged = if exact {
        (line.slope + 0.5).abs() > 1e-6
    } else {
        (line.slope + 0.5).abs() > 3.0 * line.slope_stderr
    };
    Ok(FloorFit {
        coeff,
        stderr: if exact { 0.0 } else { sxx.sqrt().recip() },
        slope: line.slope,
        slope_stderr: line.slope_stderr,
        flagged,
        tau_min: pts[0].tau,
        tau_max: pts[pts.len() - 1].tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clockloop::{run_clock, LoopConfig};
    use crate::lonoise::{LoNoiseModel, NoiseTrajectory};

    fn constant_trace(n: usize, t: f64, c: f64) -> ClockTrace {
        ClockTrace {
            ramsey_t: t,
            steps_per_cycle: 2,
            phase_o: vec![c * t; n],
            error_signal: vec![0.0; n],
            phase_estimate: vec![0.0; n],
            correction: vec![0.0; n],
            slaved_freq: NoiseTrajectory::constant(t / 2.0, 2 * n, c).unwrap(),
        }
    }

    fn curve_from(points: &[(f64, f64, f64)]) -> StabilityCurve {
        StabilityCurve {
            ramsey_t: 1.0,
            points: points
                .iter()
                .map(|&(tau, sigma_y, stderr)| StabilityPoint {
                    tau,
                    sigma_y,
                    stderr,
                    samples: 100,
                })
                .collect(),
            floor: None,
        }
    }

    #[test]
    fn constant_offset_gives_constant_sigma() {
        let traces = vec![constant_trace(64, 0.5, 3.0), constant_trace(64, 0.5, 3.0)];
        for name in ["steered", "time_average"] {
            let est = stability_estimators().get(name).unwrap();
            let c = allan_deviation(&traces, &[0.5, 2.0, 8.0], 10.0, est.as_ref()).unwrap();
            for p in &c.points {
                assert!((p.sigma_y - 0.3).abs() < 1e-14, "{name}");
            }
        }
        let c = allan_deviation(&traces, &[0.5, 2.0], 10.0, &TwoSample).unwrap();
        assert!(c.points.iter().all(|p| p.sigma_y == 0.0));
    }

    #[test]
    fn tau_validation() {
        let traces = vec![constant_trace(16, 0.5, 1.0)];
        assert!(allan_deviation(&traces, &[0.75], 1.0, &Steered).is_err());
        assert!(allan_deviation(&traces, &[9.0], 1.0, &Steered).is_err());
        assert!(matches!(
            allan_deviation(&traces, &[8.0], 1.0, &Steered),
            Err(Error::InsufficientData(_))
        ));
        assert!(allan_deviation(&traces, &[4.0], 1.0, &Steered).is_ok());
        assert!(allan_deviation(&[], &[1.0], 1.0, &Steered).is_err());
    }

    #[test]
    fn scale_equivariance() {
        let mut cfg = LoopConfig::new(1.0, 256);
        cfg.steps_per_cycle = 4;
        cfg.feedback = "open".into();
        let noise = LoNoiseModel::white(0.1);
        let m = crate::spinstate::uncorrelated_moments(
            &crate::spinstate::EnsembleSpec::uncorrelated(100).unwrap(),
        )
        .unwrap();
        let trace = run_clock(&cfg, &noise, &m, 0).unwrap();
        let mut scaled = trace.clone();
        scaled
            .slaved_freq
            .samples
            .iter_mut()
            .for_each(|s| *s *= 3.0);
        let a = allan_deviation(&[trace], &[1.0, 4.0, 16.0], 1.0, &TimeAverage).unwrap();
        let b = allan_deviation(&[scaled], &[1.0, 4.0, 16.0], 1.0, &TimeAverage).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!((q.sigma_y / p.sigma_y - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn floor_from_exact_power_law() {
        let pts: Vec<_> = [10.0, 20.0, 50.0, 100.0, 200.0]
            .iter()
            .map(|&t: &f64| (t, 2.0 / t.sqrt(), 0.0))
            .collect();
        let f = fit_floor(&curve_from(&pts), 10).unwrap();
        assert!((f.coeff - 2.0).abs() < 1e-12);
        assert!(!f.flagged);
    }

    #[test]
    fn floor_with_one_percent_noise() {
        // fixed pseudo-random perturbations within ±1%
        let noise = [0.007, -0.009, 0.003, -0.002, 0.008, -0.006, 0.001, 0.005];
        let pts: Vec<_> = noise
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let tau = 10.0 * 2f64.powi(i as i32);
                let s = 2.0 / tau.sqrt();
                (tau, s * (1.0 + e), s * 0.01)
            })
            .collect();
        let f = fit_floor(&curve_from(&pts), 10).unwrap();
        assert!((f.coeff / 2.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn floor_flags_flat_curves_and_needs_points() {
        let pts: Vec<_> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|&t| (t, 1.0, 0.01))
            .collect();
        assert!(fit_floor(&curve_from(&pts), 10).unwrap().flagged);
        let few: Vec<_> = [1.0, 2.0, 10.0, 20.0]
            .iter()
            .map(|&t: &f64| (t, 1.0 / t.sqrt(), 0.01))
            .collect();
        assert!(matches!(
            fit_floor(&curve_from(&few), 10),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn log_spacing() {
        assert_eq!(log_spaced_cycles(1000, 10, 1), vec![1, 10, 100]);
        let v = log_spaced_cycles(2048, 8, 4);
        assert_eq!(v.first(), Some(&1));
        assert!(*v.last().unwrap() <= 256);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }
}
