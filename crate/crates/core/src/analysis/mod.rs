//! Stability, spectra and scaling fits.

mod psd;
mod regress;
mod scaling;
mod stability;

pub use psd::{average_psd, psd_welch, PsdEstimate};
pub use regress::{line_fit, weighted_line_fit, LineFit};
pub use scaling::{fit_scaling, ScalingFit};
pub use stability::{
    allan_deviation, fit_floor, log_spaced_cycles, stability_estimators, taus_to_cycles, FloorFit,
    StabilityAccumulator, StabilityCurve, StabilityEstimator, StabilityPoint, Steered, TimeAverage,
    TwoSample, DEFAULT_FLOOR_MIN_CYCLES,
};
