//! Welch power spectral density.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lonoise::NoiseTrajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    /// Hz, strictly positive and increasing.
    pub freqs: Vec<f64>,
    /// One-sided density, (rad/s)^2 / Hz.
    pub psd: Vec<f64>,
    pub segment_count: usize,
}

impl PsdEstimate {
    pub fn df(&self) -> f64 {
        self.freqs[0]
    }

    /// Σ psd · Δf.
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.df()
    }

    /// Mean density over `lo <= f <= hi`.
    pub fn band_mean(&self, lo: f64, hi: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .freqs
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| *p)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Averaged Hann-windowed periodograms of mean-removed segments. Scaled so
/// that Σ psd · Δf equals the mean per-segment sample variance; DC is
/// dropped and the Nyquist bin is not doubled.
pub fn psd_welch(traj: &NoiseTrajectory, segment_len: usize, overlap: f64) -> Result<PsdEstimate> {
    if traj.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    if segment_len < 4 || segment_len > traj.len() {
        return Err(Error::invalid(format!(
            "segment length {segment_len} must lie in [4, {}]",
            traj.len()
        )));
    }
    if !(0.0..=0.9).contains(&overlap) {
        return Err(Error::invalid(format!(
            "overlap {overlap} outside [0, 0.9]"
        )));
    }
    let n = segment_len;
    let step = (((1.0 - overlap) * n as f64).round() as usize).max(1);
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect();
    let w_sq: f64 = window.iter().map(|w| w * w).sum();
    let fs = 1.0 / traj.dt;
    let fft = FftPlanner::new().plan_fft_forward(n);

    let half = n / 2;
    let mut acc = vec![0.0; half];
    let mut segments = 0;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut start = 0;
    while start + n <= traj.len() {
        let seg = &traj.samples[start..start + n];
        let mean = seg.iter().sum::<f64>() / n as f64;
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let bin = k + 1;
            let scale = if bin == half && n.is_multiple_of(2) { 1.0 } else { 2.0 };
            *a += scale * buf[bin].norm_sqr() / (fs * w_sq);
        }
        segments += 1;
        start += step;
    }
    let freqs = (1..=half).map(|k| k as f64 * fs / n as f64).collect();
    let psd = acc.into_iter().map(|a| a / segments as f64).collect();
    Ok(PsdEstimate {
        freqs,
        psd,
        segment_count: segments,
    })
}

/// Segment-wise average of several estimates on the same grid.
pub fn average_psd(estimates: &[PsdEstimate]) -> Result<PsdEstimate> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::InsufficientData("no spectra to average".into()))?;
    let mut psd = vec![0.0; first.psd.len()];
    let mut segments = 0;
    for e in estimates {
        if e.freqs.len() != first.freqs.len() {
            return Err(Error::invalid("spectra on different grids"));
        }
        for (a, p) in psd.iter_mut().zip(&e.psd) {
            *a += p * e.segment_count as f64;
        }
        segments += e.segment_count;
    }
    psd.iter_mut().for_each(|a| *a /= segments as f64);
    Ok(PsdEstimate {
        freqs: first.freqs.clone(),
        psd,
        segment_count: segments,
    })
}
