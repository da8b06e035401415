//! Parallel trial runner.
//!
//! Each trial runs on its own streams, is reduced to a partial accumulator
//! right away, and partials are merged in trial order, so results do not
//! depend on the size of the thread pool.

use rayon::prelude::*;

use crate::analysis::{
    average_psd, fit_floor, log_spaced_cycles, psd_welch, stability_estimators, PsdEstimate,
    StabilityAccumulator, StabilityCurve, DEFAULT_FLOOR_MIN_CYCLES,
};
use crate::clockloop::{run_clock, LoopConfig};
use crate::error::{Error, Result};
use crate::lonoise::LoNoiseModel;
use crate::spinstate::StateMoments;

/// Shortest run the spectral commands accept, in cycles.
pub const MIN_PSD_CYCLES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: LoopConfig,
    pub noise: LoNoiseModel,
    pub moments: StateMoments,
    /// Registered stability-estimator name.
    pub estimator: String,
    /// Averaging lengths in cycles; log-spaced when empty.
    pub cycles: Vec<usize>,
    pub floor_min_cycles: usize,
    /// Fewest segments per trial at the longest averaging time.
    pub min_segments: usize,
    pub taus_per_decade: usize,
}

impl Experiment {
    pub fn new(config: LoopConfig, noise: LoNoiseModel, moments: StateMoments) -> Self {
        Self {
            config,
            noise,
            moments,
            estimator: "steered".to_string(),
            cycles: Vec::new(),
            floor_min_cycles: DEFAULT_FLOOR_MIN_CYCLES,
            min_segments: 8,
            taus_per_decade: 4,
        }
    }

    pub fn segment_cycles(&self) -> Vec<usize> {
        if self.cycles.is_empty() {
            log_spaced_cycles(
                self.config.n_cycles,
                self.min_segments,
                self.taus_per_decade,
            )
        } else {
            self.cycles.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.noise.validate()?;
        stability_estimators().get(&self.estimator)?;
        let cycles = self.segment_cycles();
        if cycles.is_empty() || cycles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "averaging lengths must be strictly increasing",
            ));
        }
        if cycles.iter().any(|&m| m == 0 || m > self.config.n_cycles) {
            return Err(Error::invalid(
                "averaging lengths must lie in [1, n_cycles]",
            ));
        }
        Ok(())
    }
}

/// Runs all trials and returns σ_y(τ) with the white-floor fit attached
/// when enough long-τ points exist.
pub fn run_experiment(exp: &Experiment) -> Result<StabilityCurve> {
    exp.validate()?;
    let estimator = stability_estimators().get(&exp.estimator)?;
    let cycles = exp.segment_cycles();
    let partials: Vec<StabilityAccumulator> = (0..exp.config.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let trace = run_clock(&exp.config, &exp.noise, &exp.moments, trial)?;
            let mut acc = StabilityAccumulator::new(exp.config.ramsey_t, cycles.clone());
            acc.add_trace(estimator.as_ref(), &trace);
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = StabilityAccumulator::new(exp.config.ramsey_t, cycles);
    for p in &partials {
        total.merge(p);
    }
    let mut curve = total.finish(exp.config.omega)?;
    curve.floor = fit_floor(&curve, exp.floor_min_cycles).ok();
    Ok(curve)
}

/// Welch spectrum of the slaved frequency, averaged over trials.
pub fn slaved_psd(
    config: &LoopConfig,
    noise: &LoNoiseModel,
    moments: &StateMoments,
    segment_cycles: usize,
    overlap: f64,
) -> Result<PsdEstimate> {
    config.validate()?;
    if config.n_cycles < MIN_PSD_CYCLES {
        return Err(Error::invalid(format!(
            "spectra need at least {MIN_PSD_CYCLES} cycles, got {}",
            config.n_cycles
        )));
    }
    if segment_cycles == 0 || segment_cycles > config.n_cycles {
        return Err(Error::invalid(format!(
            "segment of {segment_cycles} cycles does not fit a {}-cycle run",
            config.n_cycles
        )));
    }
    let seg = segment_cycles * config.effective_steps();
    let spectra: Vec<PsdEstimate> = (0..config.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let trace = run_clock(config, noise, moments, trial)?;
            psd_welch(&trace.slaved_freq, seg, overlap)
        })
        .collect::<Result<_>>()?;
    average_psd(&spectra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinstate::{uncorrelated_moments, EnsembleSpec};

    fn unc(n: u64) -> StateMoments {
        uncorrelated_moments(&EnsembleSpec::uncorrelated(n).unwrap()).unwrap()
    }

    #[test]
    fn identical_across_pool_sizes() {
        let mut cfg = LoopConfig::new(0.01, 256);
        cfg.trials = 12;
        cfg.master_seed = 5;
        cfg.steps_per_cycle = 4;
        let exp = Experiment::new(cfg, LoNoiseModel::white(1.0), unc(1000));
        let run = |k| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .unwrap()
                .install(|| run_experiment(&exp).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(2));
        assert_eq!(a, run(5));
    }

    #[test]
    fn free_running_white_fm_matches_wiener_law() {
        let mut cfg = LoopConfig::new(1.0, 4096);
        cfg.fast = true;
        cfg.feedback = "open".into();
        cfg.trials = 40;
        cfg.omega = 2.0;
        let mut exp = Experiment::new(cfg, LoNoiseModel::white(0.5), unc(100));
        exp.estimator = "time_average".into();
        exp.cycles = vec![4, 16, 64, 256];
        let curve = run_experiment(&exp).unwrap();
        for p in &curve.points {
            let want = (0.5 / p.tau).sqrt() / 2.0;
            assert!(
                (p.sigma_y / want - 1.0).abs() < 0.05,
                "tau {}: {}",
                p.tau,
                p.sigma_y / want
            );
        }
    }

    #[test]
    fn linearized_loop_reaches_transverse_floor() {
        let mut cfg = LoopConfig::new(0.01, 1024);
        cfg.fast = true;
        cfg.trials = 64;
        cfg.linearized = true;
        let m = unc(1000);
        let exp = Experiment::new(cfg, LoNoiseModel::white(1.0), m);
        let curve = run_experiment(&exp).unwrap();
        let floor = curve.floor.unwrap();
        let want = m.dj_y() / (0.01f64.sqrt() * m.jz_mean);
        assert!((floor.coeff / want - 1.0).abs() < 4.0 * floor.stderr / want + 0.01);
    }

    #[test]
    fn psd_refuses_short_runs() {
        let cfg = LoopConfig::new(0.01, 32);
        assert!(slaved_psd(&cfg, &LoNoiseModel::white(1.0), &unc(100), 16, 0.5).is_err());
    }
}
