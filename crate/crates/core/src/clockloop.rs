//! Closed Ramsey servo loop.
//!
//! Each cycle of length T the oscillator accumulates the free-running phase
//! plus the phase from all corrections applied so far. The atoms turn that
//! phase into an error signal `E = J_z sin(φ) + J_y cos(φ)`, the feedback law
//! turns `E` into a frequency step, and the step persists from the end of the
//! cycle onward.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lonoise::{accumulate_phase, generator_for, LoNoiseModel, NoiseKind, NoiseTrajectory};
use crate::registry::{Named, Registry};
use crate::rng::{stream, Purpose};
use crate::spinstate::{sample_atomic_noise, AtomicSample, StateMoments};

pub const DEFAULT_STEPS_PER_CYCLE: usize = 32;
pub const MIN_CYCLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DephasingMode {
    /// One phase shared by all atoms.
    Collective,
    /// Independent per-atom phases, aggregated into one Gaussian term.
    Independent,
}

impl DephasingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DephasingMode::Collective => "collective",
            DephasingMode::Independent => "independent",
        }
    }
}

impl std::str::FromStr for DephasingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "collective" => Ok(DephasingMode::Collective),
            "independent" => Ok(DephasingMode::Independent),
            other => Err(Error::invalid(format!("unknown dephasing mode '{other}'"))),
        }
    }
}

/// Environmental dephasing with ⟨δφ_E^2⟩ = gamma_e · T per cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dephasing {
    pub gamma_e: f64,
    pub mode: DephasingMode,
}

impl Dephasing {
    /// λ such that the added error-signal variance is λ ⟨J_z^2⟩ ⟨δφ_E^2⟩.
    pub fn lambda(&self, moments: &StateMoments) -> f64 {
        match self.mode {
            DephasingMode::Collective => 1.0,
            DephasingMode::Independent => moments.n_atoms as f64 / 4.0 / moments.jz_sq_mean(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub ramsey_t: f64,
    pub n_cycles: usize,
    /// Name of a registered feedback law.
    pub feedback: String,
    /// Servo gain; the law's default when unset.
    pub gain: Option<f64>,
    pub steps_per_cycle: usize,
    /// Draw per-cycle phases directly instead of sampling a trajectory.
    pub fast: bool,
    pub trials: usize,
    pub master_seed: u64,
    /// Carrier angular frequency ω (rad/s).
    pub omega: f64,
    pub dephasing: Option<Dephasing>,
    /// Test hook: use the first-order error signal `J_z φ + J_y` instead of
    /// the trigonometric one.
    pub linearized: bool,
}

impl LoopConfig {
    pub fn new(ramsey_t: f64, n_cycles: usize) -> Self {
        Self {
            ramsey_t,
            n_cycles,
            feedback: "linear".to_string(),
            gain: None,
            steps_per_cycle: DEFAULT_STEPS_PER_CYCLE,
            fast: false,
            trials: 1,
            master_seed: 0,
            omega: 1.0,
            dephasing: None,
            linearized: false,
        }
    }

    pub fn law(&self) -> Result<Arc<dyn FeedbackLaw>> {
        feedback_laws().get(&self.feedback)
    }

    pub fn resolved_gain(&self) -> Result<f64> {
        Ok(match self.gain {
            Some(g) => g,
            None => self.law()?.default_gain(),
        })
    }

    /// Sample spacing of the recorded slaved trajectory.
    pub fn dt(&self) -> f64 {
        self.ramsey_t / self.effective_steps() as f64
    }

    pub fn effective_steps(&self) -> usize {
        if self.fast {
            1
        } else {
            self.steps_per_cycle
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ramsey_t.is_finite() && self.ramsey_t > 0.0) {
            return Err(Error::invalid(format!(
                "ramsey_t must be > 0, got {}",
                self.ramsey_t
            )));
        }
        if self.n_cycles < MIN_CYCLES {
            return Err(Error::invalid(format!(
                "n_cycles must be >= {MIN_CYCLES}, got {}",
                self.n_cycles
            )));
        }
        if self.steps_per_cycle < 1 {
            return Err(Error::invalid("steps_per_cycle must be >= 1"));
        }
        if self.trials < 1 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::invalid(format!(
                "omega must be > 0, got {}",
                self.omega
            )));
        }
        self.law()?;
        let g = self.resolved_gain()?;
        if !(g > 0.0 && g <= 2.0) {
            return Err(Error::invalid(format!("gain must lie in (0, 2], got {g}")));
        }
        if let Some(d) = self.dephasing {
            if !(d.gamma_e.is_finite() && d.gamma_e >= 0.0) {
                return Err(Error::invalid(format!(
                    "gamma_e must be >= 0, got {}",
                    d.gamma_e
                )));
            }
        }
        Ok(())
    }
}

/// Per-cycle record of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockTrace {
    pub ramsey_t: f64,
    pub steps_per_cycle: usize,
    /// Total LO phase accumulated in each cycle (rad).
    pub phase_o: Vec<f64>,
    /// Error signal (spin units).
    pub error_signal: Vec<f64>,
    /// Phase the servo inferred from the error signal (rad).
    pub phase_estimate: Vec<f64>,
    /// Frequency step applied at the end of each cycle (rad/s).
    pub correction: Vec<f64>,
    /// Free-running noise plus active corrections.
    pub slaved_freq: NoiseTrajectory,
}

impl ClockTrace {
    pub fn n_cycles(&self) -> usize {
        self.phase_o.len()
    }
}

/// Dephasing realization for one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DephasingDraw {
    None,
    /// Phase added to the LO phase for every atom.
    Collective(f64),
    /// Aggregate term added to the error signal.
    Independent(f64),
}

pub fn error_signal(sample: AtomicSample, phase: f64, draw: DephasingDraw) -> f64 {
    match draw {
        DephasingDraw::None => sample.jz * phase.sin() + sample.jy * phase.cos(),
        DephasingDraw::Collective(d) => {
            let p = phase + d;
            sample.jz * p.sin() + sample.jy * p.cos()
        }
        DephasingDraw::Independent(e) => sample.jz * phase.sin() + sample.jy * phase.cos() + e,
    }
}

/// First-order error signal; `draw` enters as in [`error_signal`].
pub fn linearized_error_signal(sample: AtomicSample, phase: f64, draw: DephasingDraw) -> f64 {
    match draw {
        DephasingDraw::None => sample.jz * phase + sample.jy,
        DephasingDraw::Collective(d) => sample.jz * (phase + d) + sample.jy,
        DephasingDraw::Independent(e) => sample.jz * phase + sample.jy + e,
    }
}

pub fn linear_correction(e: f64, moments: &StateMoments, ramsey_t: f64, gain: f64) -> f64 {
    -gain * e / (moments.jz_mean * ramsey_t)
}

pub fn nonlinear_correction(e: f64, moments: &StateMoments, ramsey_t: f64, gain: f64) -> f64 {
    -gain * (e / moments.jz_mean).clamp(-1.0, 1.0).asin() / ramsey_t
}

/// A servo law mapping the error signal to a frequency step.
pub trait FeedbackLaw: Named + Send + Sync {
    fn default_gain(&self) -> f64;

    /// Phase inferred from the error signal (rad).
    fn phase_estimate(&self, e: f64, moments: &StateMoments) -> f64;

    /// Frequency step (rad/s) applied after the cycle.
    fn correction(&self, e: f64, moments: &StateMoments, ramsey_t: f64, gain: f64) -> f64 {
        -gain * self.phase_estimate(e, moments) / ramsey_t
    }
}

pub struct Linear;
pub struct Arcsin;
/// No feedback; the oscillator runs free.
pub struct Open;

impl Named for Linear {
    fn name(&self) -> &'static str {
        "linear"
    }
}

impl FeedbackLaw for Linear {
    fn default_gain(&self) -> f64 {
        1.0
    }

    fn phase_estimate(&self, e: f64, moments: &StateMoments) -> f64 {
        e / moments.jz_mean
    }

    fn correction(&self, e: f64, moments: &StateMoments, ramsey_t: f64, gain: f64) -> f64 {
        linear_correction(e, moments, ramsey_t, gain)
    }
}

impl Named for Arcsin {
    fn name(&self) -> &'static str {
        "nonlinear"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["arcsin"]
    }
}

impl FeedbackLaw for Arcsin {
    /// At unit gain the arcsin law overshoots on large phases and the loop
    /// slips by 2π often enough at γT ~ 0.1 to spoil the floor.
    fn default_gain(&self) -> f64 {
        0.25
    }

    fn phase_estimate(&self, e: f64, moments: &StateMoments) -> f64 {
        (e / moments.jz_mean).clamp(-1.0, 1.0).asin()
    }

    fn correction(&self, e: f64, moments: &StateMoments, ramsey_t: f64, gain: f64) -> f64 {
        nonlinear_correction(e, moments, ramsey_t, gain)
    }
}

impl Named for Open {
    fn name(&self) -> &'static str {
        "open"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["free", "none"]
    }
}

impl FeedbackLaw for Open {
    fn default_gain(&self) -> f64 {
        1.0
    }

    fn phase_estimate(&self, e: f64, moments: &StateMoments) -> f64 {
        e / moments.jz_mean
    }

    fn correction(&self, _e: f64, _moments: &StateMoments, _ramsey_t: f64, _gain: f64) -> f64 {
        0.0
    }
}

pub fn feedback_laws() -> Registry<dyn FeedbackLaw> {
    Registry::<dyn FeedbackLaw>::new("feedback law")
        .with(Arc::new(Linear))
        .with(Arc::new(Arcsin))
        .with(Arc::new(Open))
}

/// Runs one trial. Streams are keyed on `(config.master_seed, trial_index)`,
/// so the trace does not depend on which other trials run or in what order.
pub fn run_clock(
    config: &LoopConfig,
    noise: &LoNoiseModel,
    moments: &StateMoments,
    trial_index: u64,
) -> Result<ClockTrace> {
    config.validate()?;
    noise.validate()?;
    let law = config.law()?;
    let gain = config.resolved_gain()?;
    let generator = generator_for(noise)?;
    if config.fast && !generator.supports_fast_mode() {
        return Err(Error::FastModeUnsupported(noise.kind.as_str().to_string()));
    }

    let n = config.n_cycles;
    let t = config.ramsey_t;
    let spc = config.effective_steps();
    let mut lo_rng = stream(config.master_seed, trial_index, Purpose::LoNoise);
    let mut atom_rng = stream(config.master_seed, trial_index, Purpose::Atoms);
    let mut deph_rng = stream(config.master_seed, trial_index, Purpose::Dephasing);

    let free = if config.fast {
        let phases = generator.cycle_phases(noise, t, n, &mut lo_rng)?;
        NoiseTrajectory::new(t, phases.into_iter().map(|p| p / t).collect())?
    } else {
        generator.trajectory(noise, config.dt(), n * spc, &mut lo_rng)?
    };

    let deph_sd = config
        .dephasing
        .map(|d| match d.mode {
            DephasingMode::Collective => (d.gamma_e * t).sqrt(),
            DephasingMode::Independent => (moments.n_atoms as f64 / 4.0 * d.gamma_e * t).sqrt(),
        })
        .unwrap_or(0.0);
    let signal = if config.linearized {
        linearized_error_signal
    } else {
        error_signal
    };

    let mut phase_o = Vec::with_capacity(n);
    let mut error = Vec::with_capacity(n);
    let mut estimate = Vec::with_capacity(n);
    let mut correction = Vec::with_capacity(n);
    let mut slaved = free.samples;
    // total frequency step applied so far
    let mut offset = 0.0;
    for k in 0..n {
        let window = k * spc..(k + 1) * spc;
        slaved[window.clone()].iter_mut().for_each(|s| *s += offset);
        let phi = free.dt * slaved[window].iter().sum::<f64>();
        let sample = sample_atomic_noise(moments, &mut atom_rng);
        let draw = match config.dephasing {
            None => DephasingDraw::None,
            Some(d) => {
                let z: f64 = deph_rng.sample(StandardNormal);
                match d.mode {
                    DephasingMode::Collective => DephasingDraw::Collective(deph_sd * z),
                    DephasingMode::Independent => DephasingDraw::Independent(deph_sd * z),
                }
            }
        };
        let e = signal(sample, phi, draw);
        let dw = law.correction(e, moments, t, gain);
        phase_o.push(phi);
        error.push(e);
        estimate.push(law.phase_estimate(e, moments));
        correction.push(dw);
        offset += dw;
    }

    Ok(ClockTrace {
        ramsey_t: t,
        steps_per_cycle: spc,
        phase_o,
        error_signal: error,
        phase_estimate: estimate,
        correction,
        slaved_freq: NoiseTrajectory::new(free.dt, slaved)?,
    })
}

/// Average slaved frequency offset over the first `n_sub` cycles,
/// (1/τ) ∫_0^τ δω dt with τ = n_sub T.
pub fn mean_frequency_offset(trace: &ClockTrace, n_sub: usize) -> Result<f64> {
    if n_sub == 0 || n_sub > trace.n_cycles() {
        return Err(Error::invalid(format!(
            "n_sub must lie in [1, {}], got {n_sub}",
            trace.n_cycles()
        )));
    }
    let phase = accumulate_phase(&trace.slaved_freq, 0, n_sub * trace.steps_per_cycle)?;
    Ok(phase / (n_sub as f64 * trace.ramsey_t))
}

/// True when the noise model forbids per-cycle phase draws.
pub fn requires_trajectory(noise: &LoNoiseModel) -> bool {
    noise.kind == NoiseKind::FlickerFm
}
