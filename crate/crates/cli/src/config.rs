//! Run configuration: TOML with one table per concern.
//!
//! ```toml
//! [ensemble]
//! n_atoms = [1000]
//! state = "uncorrelated"   # uncorrelated | kappa | xi | optimal
//!
//! [noise]
//! kind = "white_fm"
//! gamma = 1.0
//!
//! [loop]
//! gamma_t = 0.01
//! n_cycles = 2048
//! trials = 200
//! ```
//!
//! Every field has a default; unknown keys are rejected.

use serde::{Deserialize, Serialize};

use squeezeclock_core::clockloop::{Dephasing, DephasingMode, LoopConfig};
use squeezeclock_core::lonoise::{LoNoiseModel, NoiseKind};
use squeezeclock_core::montecarlo::Experiment;
use squeezeclock_core::spinstate::{kappa_for_xi, moment_solvers, EnsembleSpec, StateMoments};
use squeezeclock_core::theory::{optimal_gamma_t, optimize_kappa, FeedbackKind};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub ensemble: EnsembleSection,
    pub noise: NoiseSection,
    #[serde(rename = "loop")]
    pub servo: LoopSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dephasing: Option<DephasingSection>,
    pub analysis: AnalysisSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    pub psd: PsdSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub n_atoms: Vec<u64>,
    /// uncorrelated | kappa | xi | optimal
    pub state: String,
    /// Gaussian widths; with state = "kappa", κ = kappa[0] · N^kappa_power.
    pub kappa: Vec<f64>,
    pub kappa_power: f64,
    /// With state = "xi", the target is ξ = xi · N^xi_power.
    pub xi: f64,
    pub xi_power: f64,
    /// Registered moment solver.
    pub moments: String,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n_atoms: vec![1000],
            state: "uncorrelated".into(),
            kappa: Vec::new(),
            kappa_power: 0.0,
            xi: 1.0,
            xi_power: 0.0,
            moments: "auto".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub kind: String,
    pub gamma: f64,
    /// Flicker calibration window; the Ramsey time when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_ref: Option<f64>,
    pub f_floor_decades: u32,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            kind: "white_fm".into(),
            gamma: 1.0,
            t_ref: None,
            f_floor_decades: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopSection {
    /// Ramsey time in seconds. Ignored when `gamma_t` or `optimize_t` is set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ramsey_t: Option<f64>,
    /// Ramsey time as the dimensionless product γT.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_t: Option<f64>,
    /// Pick T from the analytic optimum for each state.
    pub optimize_t: bool,
    pub n_cycles: usize,
    pub feedback: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    pub steps_per_cycle: usize,
    pub fast: bool,
    pub trials: usize,
    pub seed: u64,
    pub omega: f64,
    pub linearized: bool,
}

impl Default for LoopSection {
    fn default() -> Self {
        Self {
            ramsey_t: None,
            gamma_t: None,
            optimize_t: false,
            n_cycles: 2048,
            feedback: "linear".into(),
            gain: None,
            steps_per_cycle: 32,
            fast: false,
            trials: 100,
            seed: 0,
            omega: 1.0,
            linearized: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingSection {
    /// ⟨δφ_E^2⟩ = gamma_e · T.
    pub gamma_e: f64,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub estimator: String,
    pub floor_min_cycles: usize,
    pub taus_per_decade: usize,
    pub min_segments: usize,
    /// Averaging time at which the theory command reports σ_y.
    pub tau: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            estimator: "steered".into(),
            floor_min_cycles: 10,
            taus_per_decade: 4,
            min_segments: 8,
            tau: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// gamma_t (alias T) | kappa | n_atoms (alias N)
    pub axis: String,
    pub values: Vec<f64>,
    /// Feedback laws to sweep; `[loop].feedback` when empty.
    pub feedbacks: Vec<String>,
    /// State rules to sweep; `[ensemble].state` when empty.
    pub states: Vec<String>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axis: "gamma_t".into(),
            values: Vec::new(),
            feedbacks: Vec::new(),
            states: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsdSection {
    pub segment_cycles: usize,
    pub overlap: f64,
    /// Squeezed spectrum target ξ = squeezed_xi · N^squeezed_xi_power.
    pub squeezed_xi: f64,
    pub squeezed_xi_power: f64,
}

impl Default for PsdSection {
    fn default() -> Self {
        Self {
            segment_cycles: 256,
            overlap: 0.5,
            squeezed_xi: 1.0,
            squeezed_xi_power: -1.0 / 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateRule {
    Uncorrelated,
    Kappa,
    Xi,
    Optimal,
}

impl StateRule {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uncorrelated" | "coherent" => Ok(StateRule::Uncorrelated),
            "kappa" | "gaussian" => Ok(StateRule::Kappa),
            "xi" => Ok(StateRule::Xi),
            "optimal" | "squeezed" => Ok(StateRule::Optimal),
            other => Err(CliError::Config(format!(
                "unknown state '{other}' (uncorrelated, kappa, xi, optimal)"
            ))),
        }
    }
}

/// A fully specified ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedState {
    pub spec: EnsembleSpec,
    pub moments: StateMoments,
}

impl ResolvedState {
    pub fn kappa(&self) -> Option<f64> {
        self.spec.kappa()
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn noise_kind(&self) -> Result<NoiseKind, CliError> {
        Ok(self.noise.kind.parse::<NoiseKind>()?)
    }

    pub fn feedbacks(&self) -> Vec<String> {
        match &self.sweep {
            Some(s) if !s.feedbacks.is_empty() => s.feedbacks.clone(),
            _ => vec![self.servo.feedback.clone()],
        }
    }

    pub fn states(&self) -> Vec<String> {
        match &self.sweep {
            Some(s) if !s.states.is_empty() => s.states.clone(),
            _ => vec![self.ensemble.state.clone()],
        }
    }

    pub fn check_common(&self) -> Result<(), CliError> {
        if self.ensemble.n_atoms.is_empty() {
            return Err(CliError::Config("ensemble.n_atoms is empty".into()));
        }
        moment_solvers().get(&self.ensemble.moments)?;
        self.noise_kind()?;
        if !(self.noise.gamma.is_finite() && self.noise.gamma >= 0.0) {
            return Err(CliError::Config(format!(
                "noise.gamma must be >= 0, got {}",
                self.noise.gamma
            )));
        }
        Ok(())
    }

    /// Ensemble for `n` atoms under a state rule. `feedback` selects the
    /// objective for the optimal rule.
    pub fn resolve_state(
        &self,
        n: u64,
        rule: StateRule,
        feedback: &str,
    ) -> Result<ResolvedState, CliError> {
        let spec = match rule {
            StateRule::Uncorrelated => EnsembleSpec::uncorrelated(n)?,
            StateRule::Kappa => {
                let k0 = *self.ensemble.kappa.first().ok_or_else(|| {
                    CliError::Config("state = \"kappa\" needs ensemble.kappa".into())
                })?;
                EnsembleSpec::gaussian(n, k0 * (n as f64).powf(self.ensemble.kappa_power))?
            }
            StateRule::Xi => {
                let target = self.ensemble.xi * (n as f64).powf(self.ensemble.xi_power);
                EnsembleSpec::gaussian(n, kappa_for_xi(n, target)?)?
            }
            StateRule::Optimal => {
                let opt = optimize_kappa(n, FeedbackKind::from_law(feedback)?, self.noise_kind()?)?;
                EnsembleSpec::gaussian(n, opt.kappa)?
            }
        };
        self.state_from_spec(spec)
    }

    pub fn state_from_spec(&self, spec: EnsembleSpec) -> Result<ResolvedState, CliError> {
        let solver = moment_solvers().get(&self.ensemble.moments)?;
        Ok(ResolvedState {
            spec,
            moments: solver.moments(&spec)?,
        })
    }

    /// Ramsey time for a state: analytic optimum, γT, or explicit seconds.
    pub fn ramsey_t(&self, m: &StateMoments, feedback: &str) -> Result<f64, CliError> {
        let gamma = self.noise.gamma;
        if self.servo.optimize_t {
            if gamma.is_nan() || gamma <= 0.0 {
                return Err(CliError::Config("optimize_t needs noise.gamma > 0".into()));
            }
            let gt = optimal_gamma_t(m, FeedbackKind::from_law(feedback)?, self.noise_kind()?)?;
            return Ok(gt / gamma);
        }
        if let Some(gt) = self.servo.gamma_t {
            if gamma.is_nan() || gamma <= 0.0 {
                return Err(CliError::Config(
                    "loop.gamma_t needs noise.gamma > 0".into(),
                ));
            }
            return Ok(gt / gamma);
        }
        self.servo.ramsey_t.ok_or_else(|| {
            CliError::Config("set one of loop.ramsey_t, loop.gamma_t, loop.optimize_t".into())
        })
    }

    pub fn noise_model(&self, ramsey_t: f64) -> Result<LoNoiseModel, CliError> {
        let kind = self.noise_kind()?;
        let model = LoNoiseModel {
            kind,
            gamma: if kind == NoiseKind::None {
                0.0
            } else {
                self.noise.gamma
            },
            t_ref: self.noise.t_ref.unwrap_or(ramsey_t),
            f_floor_decades: self.noise.f_floor_decades,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn loop_config(&self, ramsey_t: f64, feedback: &str) -> Result<LoopConfig, CliError> {
        let s = &self.servo;
        let dephasing = match &self.dephasing {
            Some(d) => Some(Dephasing {
                gamma_e: d.gamma_e,
                mode: d.mode.parse::<DephasingMode>()?,
            }),
            None => None,
        };
        let cfg = LoopConfig {
            ramsey_t,
            n_cycles: s.n_cycles,
            feedback: feedback.to_string(),
            gain: s.gain,
            steps_per_cycle: s.steps_per_cycle,
            fast: s.fast,
            trials: s.trials,
            master_seed: s.seed,
            omega: s.omega,
            dephasing,
            linearized: s.linearized,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn experiment(
        &self,
        state: &ResolvedState,
        ramsey_t: f64,
        feedback: &str,
    ) -> Result<Experiment, CliError> {
        let config = self.loop_config(ramsey_t, feedback)?;
        let noise = self.noise_model(ramsey_t)?;
        let mut exp = Experiment::new(config, noise, state.moments);
        exp.estimator = self.analysis.estimator.clone();
        exp.floor_min_cycles = self.analysis.floor_min_cycles;
        exp.taus_per_decade = self.analysis.taus_per_decade;
        exp.min_segments = self.analysis.min_segments;
        exp.validate()?;
        Ok(exp)
    }
}
