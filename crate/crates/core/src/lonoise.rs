//! Free-running local-oscillator frequency noise.
//!
//! Trajectories are sampled frequency offsets δω(t) (rad/s) on a uniform
//! grid. White FM has a flat one-sided density 2γ, so the phase accumulated
//! over any window T has variance γT. Flicker FM has a one-sided density h/f
//! over a finite band, with h chosen so the phase accumulated over `t_ref`
//! has variance (γ t_ref)^2.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    WhiteFm,
    FlickerFm,
    None,
}

impl NoiseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::WhiteFm => "white_fm",
            NoiseKind::FlickerFm => "flicker_fm",
            NoiseKind::None => "none",
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "white_fm" | "white" => Ok(NoiseKind::WhiteFm),
            "flicker_fm" | "flicker" | "1/f" => Ok(NoiseKind::FlickerFm),
            "none" | "off" => Ok(NoiseKind::None),
            other => Err(Error::invalid(format!("unknown noise kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoNoiseModel {
    pub kind: NoiseKind,
    /// Dephasing rate γ (1/s).
    pub gamma: f64,
    /// Flicker calibration window (s).
    pub t_ref: f64,
    /// Decades of flicker band below 1/t_ref.
    pub f_floor_decades: u32,
}

impl LoNoiseModel {
    pub fn white(gamma: f64) -> Self {
        Self {
            kind: NoiseKind::WhiteFm,
            gamma,
            t_ref: 1.0,
            f_floor_decades: 3,
        }
    }

    pub fn flicker(gamma: f64, t_ref: f64, f_floor_decades: u32) -> Self {
        Self {
            kind: NoiseKind::FlickerFm,
            gamma,
            t_ref,
            f_floor_decades,
        }
    }

    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            gamma: 0.0,
            t_ref: 1.0,
            f_floor_decades: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if self.kind == NoiseKind::FlickerFm {
            if !(self.t_ref.is_finite() && self.t_ref > 0.0) {
                return Err(Error::invalid(format!(
                    "t_ref must be > 0, got {}",
                    self.t_ref
                )));
            }
            if self.f_floor_decades == 0 {
                return Err(Error::invalid("f_floor_decades must be >= 1"));
            }
        }
        Ok(())
    }

    /// Variance of the phase accumulated over a window of length `t`, as set
    /// by the calibration. Exact for white FM; for flicker FM it is the
    /// calibration point (γ t_ref)^2 scaled as t^2.
    pub fn nominal_phase_variance(&self, t: f64) -> f64 {
        match self.kind {
            NoiseKind::WhiteFm => self.gamma * t,
            NoiseKind::FlickerFm => (self.gamma * t).powi(2),
            NoiseKind::None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrajectory {
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl NoiseTrajectory {
    pub fn new(dt: f64, samples: Vec<f64>) -> Result<Self> {
        check_grid(dt, samples.len())?;
        Ok(Self { dt, samples })
    }

    pub fn constant(dt: f64, n_steps: usize, value: f64) -> Result<Self> {
        Self::new(dt, vec![value; n_steps])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.dt * self.samples.len() as f64
    }
}

fn check_grid(dt: f64, n_steps: usize) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    if n_steps < 1 {
        return Err(Error::invalid("trajectory needs at least one sample"));
    }
    Ok(())
}

/// Phase accumulated over `steps` samples starting at `start`: dt · Σ δω
/// (left Riemann sum).
pub fn accumulate_phase(traj: &NoiseTrajectory, start: usize, steps: usize) -> Result<f64> {
    let end = start.saturating_add(steps);
    if end > traj.samples.len() {
        return Err(Error::OutOfBounds {
            start,
            end,
            len: traj.samples.len(),
        });
    }
    Ok(traj.dt * traj.samples[start..end].iter().sum::<f64>())
}

pub fn gen_white_fm<R: Rng + ?Sized>(
    model: &LoNoiseModel,
    dt: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<NoiseTrajectory> {
    expect_kind(model, NoiseKind::WhiteFm)?;
    model.validate()?;
    check_grid(dt, n_steps)?;
    let sd = (model.gamma / dt).sqrt();
    let samples = (0..n_steps)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    NoiseTrajectory::new(dt, samples)
}

/// FFT length used for flicker synthesis: a power of two covering both the
/// requested span and the lowest band frequency.
pub fn flicker_fft_len(model: &LoNoiseModel, dt: f64, n_steps: usize) -> usize {
    let band = 10f64.powi(model.f_floor_decades as i32) * model.t_ref / dt;
    let need = (n_steps as f64).max(band.ceil());
    (need as usize).next_power_of_two()
}

/// Positive-frequency bins `k` (of an `nfft` grid) inside the flicker band.
fn flicker_bins(model: &LoNoiseModel, dt: f64, nfft: usize) -> std::ops::Range<usize> {
    let df = 1.0 / (nfft as f64 * dt);
    let f_min = 10f64.powi(-(model.f_floor_decades as i32)) / model.t_ref;
    let first = ((f_min / df) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    first..nfft / 2
}

/// Level h of the one-sided density h/f that gives Var(phase over t_ref) =
/// (γ t_ref)^2 on this grid, evaluated from the discrete spectrum:
/// Var = (dt/M) Σ_k (h/f_k) |D_L(ω_k)|^2 with the window kernel
/// |D_L(ω)|^2 = sin^2(Lω/2) / sin^2(ω/2).
pub fn flicker_level(model: &LoNoiseModel, dt: f64, nfft: usize) -> f64 {
    let window = (model.t_ref / dt).round().max(1.0);
    let df = 1.0 / (nfft as f64 * dt);
    let unit: f64 = flicker_bins(model, dt, nfft)
        .map(|k| {
            let w = 2.0 * PI * k as f64 / nfft as f64;
            let kernel = ((window * w / 2.0).sin() / (w / 2.0).sin()).powi(2);
            kernel / (k as f64 * df)
        })
        .sum::<f64>()
        * dt
        / nfft as f64;
    (model.gamma * model.t_ref).powi(2) / unit
}

/// Band-limited 1/f trajectory by spectral synthesis: independent complex
/// Gaussian amplitudes with E|X_k|^2 = (h/f_k) M/(2 dt) on the band, zero
/// elsewhere, inverse FFT, truncated to `n_steps`.
pub fn gen_flicker_fm<R: Rng + ?Sized>(
    model: &LoNoiseModel,
    dt: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<NoiseTrajectory> {
    expect_kind(model, NoiseKind::FlickerFm)?;
    model.validate()?;
    check_grid(dt, n_steps)?;
    if (n_steps as f64) * dt < model.t_ref * (1.0 - 1e-9) {
        return Err(Error::invalid(format!(
            "flicker span {} s is shorter than t_ref = {} s",
            n_steps as f64 * dt,
            model.t_ref
        )));
    }
    if model.gamma == 0.0 {
        return NoiseTrajectory::constant(dt, n_steps, 0.0);
    }
    let nfft = flicker_fft_len(model, dt, n_steps);
    let h = flicker_level(model, dt, nfft);
    let df = 1.0 / (nfft as f64 * dt);
    let bins = flicker_bins(model, dt, nfft);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); nfft];
    for k in bins {
        let power = h / (k as f64 * df) * nfft as f64 / (2.0 * dt);
        let sd = (power / 2.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        spectrum[k] = Complex64::new(sd * re, sd * im);
        spectrum[nfft - k] = spectrum[k].conj();
    }
    FftPlanner::new()
        .plan_fft_inverse(nfft)
        .process(&mut spectrum);
    let scale = 1.0 / nfft as f64;
    let samples = spectrum[..n_steps].iter().map(|c| c.re * scale).collect();
    NoiseTrajectory::new(dt, samples)
}

fn expect_kind(model: &LoNoiseModel, kind: NoiseKind) -> Result<()> {
    if model.kind != kind {
        return Err(Error::invalid(format!(
            "generator for {} called with a {} model",
            kind.as_str(),
            model.kind.as_str()
        )));
    }
    Ok(())
}

/// A family of free-running noise processes.
pub trait NoiseGenerator: Named + Send + Sync {
    fn trajectory(
        &self,
        model: &LoNoiseModel,
        dt: f64,
        n_steps: usize,
        rng: &mut dyn rand::RngCore,
    ) -> Result<NoiseTrajectory>;

    /// Per-cycle accumulated phases drawn directly, without a trajectory.
    /// Only valid when consecutive cycle phases are independent.
    fn cycle_phases(
        &self,
        model: &LoNoiseModel,
        ramsey_t: f64,
        n_cycles: usize,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<f64>> {
        let _ = (model, ramsey_t, n_cycles, rng);
        Err(Error::FastModeUnsupported(self.name().to_string()))
    }

    fn supports_fast_mode(&self) -> bool {
        false
    }
}

pub struct WhiteFm;
pub struct FlickerFm;
pub struct Silent;

impl Named for WhiteFm {
    fn name(&self) -> &'static str {
        "white_fm"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["white"]
    }
}

impl NoiseGenerator for WhiteFm {
    fn trajectory(
        &self,
        model: &LoNoiseModel,
        dt: f64,
        n_steps: usize,
        rng: &mut dyn rand::RngCore,
    ) -> Result<NoiseTrajectory> {
        gen_white_fm(model, dt, n_steps, rng)
    }

    fn cycle_phases(
        &self,
        model: &LoNoiseModel,
        ramsey_t: f64,
        n_cycles: usize,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<f64>> {
        expect_kind(model, NoiseKind::WhiteFm)?;
        model.validate()?;
        let sd = (model.gamma * ramsey_t).sqrt();
        Ok((0..n_cycles)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect())
    }

    fn supports_fast_mode(&self) -> bool {
        true
    }
}

impl Named for FlickerFm {
    fn name(&self) -> &'static str {
        "flicker_fm"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["flicker", "1/f"]
    }
}

impl NoiseGenerator for FlickerFm {
    fn trajectory(
        &self,
        model: &LoNoiseModel,
        dt: f64,
        n_steps: usize,
        rng: &mut dyn rand::RngCore,
    ) -> Result<NoiseTrajectory> {
        gen_flicker_fm(model, dt, n_steps, rng)
    }
}

impl Named for Silent {
    fn name(&self) -> &'static str {
        "none"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["off"]
    }
}

impl NoiseGenerator for Silent {
    fn trajectory(
        &self,
        _model: &LoNoiseModel,
        dt: f64,
        n_steps: usize,
        _rng: &mut dyn rand::RngCore,
    ) -> Result<NoiseTrajectory> {
        NoiseTrajectory::constant(dt, n_steps, 0.0)
    }

    fn cycle_phases(
        &self,
        _model: &LoNoiseModel,
        _ramsey_t: f64,
        n_cycles: usize,
        _rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<f64>> {
        Ok(vec![0.0; n_cycles])
    }

    fn supports_fast_mode(&self) -> bool {
        true
    }
}

pub fn noise_generators() -> Registry<dyn NoiseGenerator> {
    Registry::<dyn NoiseGenerator>::new("noise generator")
        .with(Arc::new(WhiteFm))
        .with(Arc::new(FlickerFm))
        .with(Arc::new(Silent))
}

/// Generator registered under the model's kind.
pub fn generator_for(model: &LoNoiseModel) -> Result<Arc<dyn NoiseGenerator>> {
    noise_generators().get(model.kind.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn variance(xs: &[f64]) -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    }

    fn window_phases(traj: &NoiseTrajectory, steps: usize) -> Vec<f64> {
        (0..traj.len() / steps)
            .map(|i| accumulate_phase(traj, i * steps, steps).unwrap())
            .collect()
    }

    fn slope(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn zero_gamma_gives_zero_trajectories() {
        let mut rng = stream(1, 0, Purpose::LoNoise);
        let w = gen_white_fm(&LoNoiseModel::white(0.0), 0.1, 100, &mut rng).unwrap();
        assert!(w.samples.iter().all(|&x| x == 0.0));
        let f = gen_flicker_fm(&LoNoiseModel::flicker(0.0, 1.0, 3), 0.1, 100, &mut rng).unwrap();
        assert!(f.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_bad_grids() {
        let mut rng = stream(1, 0, Purpose::LoNoise);
        let m = LoNoiseModel::white(1.0);
        assert!(gen_white_fm(&m, 0.0, 10, &mut rng).is_err());
        assert!(gen_white_fm(&m, -1.0, 10, &mut rng).is_err());
        assert!(gen_white_fm(&m, 0.1, 0, &mut rng).is_err());
        let f = LoNoiseModel::flicker(1.0, 1.0, 3);
        assert!(gen_flicker_fm(&f, 0.1, 5, &mut rng).is_err());
        let f0 = LoNoiseModel::flicker(1.0, 1.0, 0);
        assert!(gen_flicker_fm(&f0, 0.1, 50, &mut rng).is_err());
        assert!(gen_flicker_fm(&m, 0.1, 50, &mut rng).is_err());
    }

    #[test]
    fn accumulate_phase_contract() {
        let zero = NoiseTrajectory::constant(0.25, 8, 0.0).unwrap();
        assert_eq!(accumulate_phase(&zero, 0, 8).unwrap(), 0.0);
        let c = NoiseTrajectory::constant(0.25, 8, 3.0).unwrap();
        assert_eq!(accumulate_phase(&c, 4, 4).unwrap(), 3.0);
        assert!(matches!(
            accumulate_phase(&c, 5, 4),
            Err(Error::OutOfBounds {
                start: 5,
                end: 9,
                len: 8
            })
        ));
    }

    #[test]
    fn white_fm_window_variance_is_gamma_t() {
        let mut rng = stream(2, 0, Purpose::LoNoise);
        let traj = gen_white_fm(&LoNoiseModel::white(1.0), 0.01, 1_000_000, &mut rng).unwrap();
        let phases = window_phases(&traj, 100);
        assert_eq!(phases.len(), 10_000);
        let v = variance(&phases);
        let sd = (2.0 / 10_000.0_f64).sqrt();
        assert!((v - 1.0).abs() < 3.0 * sd, "var = {v}");
    }

    #[test]
    fn white_fm_variance_linear_in_window() {
        let mut rng = stream(3, 0, Purpose::LoNoise);
        let traj = gen_white_fm(&LoNoiseModel::white(2.0), 0.01, 2_000_000, &mut rng).unwrap();
        let steps = [10usize, 31, 100, 316, 1000];
        let xs: Vec<f64> = steps.iter().map(|&s| (s as f64).ln()).collect();
        let ys: Vec<f64> = steps
            .iter()
            .map(|&s| variance(&window_phases(&traj, s)).ln())
            .collect();
        let e = slope(&xs, &ys);
        assert!((e - 1.0).abs() < 0.05, "exponent {e}");
    }

    #[test]
    fn fast_mode_phases_match_white_calibration() {
        let g = WhiteFm;
        let mut rng = stream(4, 0, Purpose::LoNoise);
        let phases = g
            .cycle_phases(&LoNoiseModel::white(0.5), 0.2, 40_000, &mut rng)
            .unwrap();
        let v = variance(&phases);
        assert!((v - 0.1).abs() < 3.0 * 0.1 * (2.0 / 40_000.0_f64).sqrt());
        let mut rng = stream(4, 0, Purpose::LoNoise);
        let err = FlickerFm
            .cycle_phases(&LoNoiseModel::flicker(1.0, 1.0, 3), 1.0, 10, &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::FastModeUnsupported(_)));
    }

    #[test]
    fn flicker_calibrated_at_t_ref() {
        let model = LoNoiseModel::flicker(0.3, 1.0, 3);
        let dt = 1.0 / 16.0;
        let mut phases = Vec::new();
        for trial in 0..400 {
            let mut rng = stream(5, trial, Purpose::LoNoise);
            let traj = gen_flicker_fm(&model, dt, 1024, &mut rng).unwrap();
            // far-apart windows are nearly independent
            for start in [0usize, 512] {
                phases.push(accumulate_phase(&traj, start, 16).unwrap());
            }
        }
        let v = phases.iter().map(|x| x * x).sum::<f64>() / phases.len() as f64;
        let target = 0.09;
        assert!((v / target - 1.0).abs() < 0.15, "var {v} vs {target}");
    }

    #[test]
    fn flicker_phase_std_roughly_linear_in_window() {
        let model = LoNoiseModel::flicker(1.0, 1.0, 3);
        let dt = 1.0 / 8.0;
        let steps = [1usize, 2, 4, 8, 16, 32, 64, 80];
        let mut acc = vec![0.0; steps.len()];
        let trials = 200;
        for trial in 0..trials {
            let mut rng = stream(6, trial, Purpose::LoNoise);
            let traj = gen_flicker_fm(&model, dt, 8192, &mut rng).unwrap();
            for (a, &s) in acc.iter_mut().zip(&steps) {
                let w = window_phases(&traj, s);
                *a += w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
            }
        }
        let xs: Vec<f64> = steps.iter().map(|&s| (s as f64 * dt).ln()).collect();
        let ys: Vec<f64> = acc
            .iter()
            .map(|a| (a / trials as f64).sqrt().ln())
            .collect();
        let e = slope(&xs, &ys);
        assert!((e - 1.0).abs() < 0.1, "std exponent {e}");
    }

    #[test]
    fn trajectories_are_deterministic() {
        for model in [LoNoiseModel::white(1.0), LoNoiseModel::flicker(1.0, 1.0, 2)] {
            let gen = generator_for(&model).unwrap();
            let a = gen
                .trajectory(&model, 0.1, 500, &mut stream(9, 3, Purpose::LoNoise))
                .unwrap();
            let b = gen
                .trajectory(&model, 0.1, 500, &mut stream(9, 3, Purpose::LoNoise))
                .unwrap();
            let c = gen
                .trajectory(&model, 0.1, 500, &mut stream(9, 4, Purpose::LoNoise))
                .unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn registry_lookup_and_kind_parse() {
        let reg = noise_generators();
        assert_eq!(reg.get("white").unwrap().name(), "white_fm");
        assert_eq!(reg.get("1/f").unwrap().name(), "flicker_fm");
        assert!(reg.get("none").unwrap().supports_fast_mode());
        assert!(!reg.get("flicker_fm").unwrap().supports_fast_mode());
        assert_eq!(
            "flicker".parse::<NoiseKind>().unwrap(),
            NoiseKind::FlickerFm
        );
        assert!("pink".parse::<NoiseKind>().is_err());
    }
}
