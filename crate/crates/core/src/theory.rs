//! Analytic stability predictions for the locked clock.

use crate::error::{Error, Result};
use crate::lonoise::NoiseKind;
use crate::spinstate::{moments, EnsembleSpec, StateMoments};

/// Largest γT for which the arcsin servo still captures the phase.
pub const NONLINEAR_CAPTURE_GAMMA_T: f64 = 0.1;
/// Relative tolerance of the κ minimization.
pub const KAPPA_REL_TOL: f64 = 1e-3;
/// Points in the coarse log-κ scan that brackets the minimum.
const KAPPA_GRID: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackKind {
    Linear,
    Nonlinear,
}

impl FeedbackKind {
    /// Maps a registered feedback-law name onto the analytic family.
    pub fn from_law(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(FeedbackKind::Linear),
            "nonlinear" | "arcsin" => Ok(FeedbackKind::Nonlinear),
            other => Err(Error::invalid(format!(
                "no analytic model for feedback '{other}'"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeedbackKind::Linear => "linear",
            FeedbackKind::Nonlinear => "nonlinear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Uncorrelated,
    /// Gaussian state at the optimal width.
    Squeezed,
}

/// Long-τ stability
///
/// σ_y = sqrt(ΔJ_y^2 + ΔJ_z^2 ⟨δφ_O^2⟩ + λ ⟨J_z^2⟩ ⟨δφ_E^2⟩) / (ω sqrt(τ T) ⟨J_z⟩).
pub fn sigma_y_theory(
    m: &StateMoments,
    var_phi_o: f64,
    var_phi_e: f64,
    lambda: f64,
    ramsey_t: f64,
    tau: f64,
    omega: f64,
) -> f64 {
    let noise = m.var_jy + m.var_jz * var_phi_o + lambda * m.jz_sq_mean() * var_phi_e;
    noise.sqrt() / (omega * (tau * ramsey_t).sqrt() * m.jz_mean)
}

/// Floor coefficient c = σ_y sqrt(τ) of [`sigma_y_theory`].
pub fn floor_coeff_theory(
    m: &StateMoments,
    var_phi_o: f64,
    var_phi_e: f64,
    lambda: f64,
    ramsey_t: f64,
    omega: f64,
) -> f64 {
    sigma_y_theory(m, var_phi_o, var_phi_e, lambda, ramsey_t, 1.0, omega)
}

/// Optimized white-noise prefactor ζ in σ_y = ζ N^{-1/3} γ / (ω sqrt(γτ)),
/// including the cubic phase-breakdown cost of linear feedback.
pub fn zeta(m: &StateMoments) -> f64 {
    let n = m.n_atoms as f64;
    let c = 2f64.powf(4.0 / 3.0);
    let ry = m.dj_y() / m.jz_mean;
    let rz = m.dj_z() / m.jz_mean;
    3.0 / c * n.cbrt() * (ry.powf(4.0 / 3.0) + c / 3.0 * rz * rz).sqrt()
}

/// T with γT = (2 ΔJ_y^2 / ⟨J_z⟩^2)^{1/3}.
pub fn optimal_t_linear(m: &StateMoments, gamma: f64) -> f64 {
    (2.0 * m.var_jy / (m.jz_mean * m.jz_mean)).cbrt() / gamma
}

/// T with γT at the arcsin capture limit.
pub fn optimal_t_nonlinear(gamma: f64) -> f64 {
    NONLINEAR_CAPTURE_GAMMA_T / gamma
}

/// Optimal dimensionless γT per feedback law and noise type. For flicker
/// noise the same breakdown criteria are applied with ⟨δφ^2⟩ = (γT)^2.
pub fn optimal_gamma_t(m: &StateMoments, feedback: FeedbackKind, noise: NoiseKind) -> Result<f64> {
    let ratio = 2.0 * m.var_jy / (m.jz_mean * m.jz_mean);
    match (feedback, noise) {
        (FeedbackKind::Linear, NoiseKind::WhiteFm) => Ok(ratio.cbrt()),
        (FeedbackKind::Nonlinear, NoiseKind::WhiteFm) => Ok(NONLINEAR_CAPTURE_GAMMA_T),
        (FeedbackKind::Linear, NoiseKind::FlickerFm) => Ok(ratio.powf(1.0 / 6.0)),
        (FeedbackKind::Nonlinear, NoiseKind::FlickerFm) => Ok(NONLINEAR_CAPTURE_GAMMA_T.sqrt()),
        (_, NoiseKind::None) => Err(Error::invalid("no optimal Ramsey time without LO noise")),
    }
}

/// ⟨δφ_O^2⟩ per cycle at a given γT.
pub fn lo_phase_variance(noise: NoiseKind, gamma_t: f64) -> f64 {
    match noise {
        NoiseKind::WhiteFm => gamma_t,
        NoiseKind::FlickerFm => gamma_t * gamma_t,
        NoiseKind::None => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaOptimum {
    pub kappa: f64,
    /// Minimized objective: ζ for white/linear, otherwise the floor
    /// coefficient σ_y ω sqrt(τ/γ).
    pub value: f64,
    pub moments: StateMoments,
    /// Set when the coarse scan found its minimum at a range endpoint.
    pub flagged: bool,
}

/// Objective minimized over the Gaussian family for each combination.
fn kappa_objective(feedback: FeedbackKind, noise: NoiseKind) -> Result<fn(&StateMoments) -> f64> {
    fn white_linear(m: &StateMoments) -> f64 {
        zeta(m)
    }
    // fixed γT = 0.1 (white) or sqrt(0.1) (flicker): both give ⟨δφ_O^2⟩ = 0.1
    fn nonlinear(m: &StateMoments) -> f64 {
        let gt = NONLINEAR_CAPTURE_GAMMA_T;
        ((m.var_jy + m.var_jz * gt) / gt).sqrt() / m.jz_mean
    }
    fn flicker_linear(m: &StateMoments) -> f64 {
        let gt = (2.0 * m.var_jy / (m.jz_mean * m.jz_mean)).powf(1.0 / 6.0);
        ((m.var_jy + m.var_jz * gt * gt) / gt).sqrt() / m.jz_mean
    }
    match (feedback, noise) {
        (FeedbackKind::Linear, NoiseKind::WhiteFm) => Ok(white_linear),
        (FeedbackKind::Nonlinear, NoiseKind::WhiteFm | NoiseKind::FlickerFm) => Ok(nonlinear),
        (FeedbackKind::Linear, NoiseKind::FlickerFm) => Ok(flicker_linear),
        (_, NoiseKind::None) => Err(Error::invalid("no κ optimum without LO noise")),
    }
}

/// Minimizes the stability over κ ∈ [1, sqrt(N)]: a log-spaced scan
/// brackets the minimum, then golden-section search in log κ narrows it to
/// [`KAPPA_REL_TOL`].
pub fn optimize_kappa(
    n_atoms: u64,
    feedback: FeedbackKind,
    noise: NoiseKind,
) -> Result<KappaOptimum> {
    if n_atoms < 100 {
        return Err(Error::invalid(format!(
            "optimize_kappa needs N >= 100, got {n_atoms}"
        )));
    }
    let objective = kappa_objective(feedback, noise)?;
    let top = (n_atoms as f64).sqrt().ln();
    let eval = |lk: f64| -> Result<(f64, StateMoments)> {
        let m = moments(&EnsembleSpec::gaussian(n_atoms, lk.exp().min(top.exp()))?)?;
        let v = objective(&m);
        if !v.is_finite() {
            return Err(Error::Optimization(format!(
                "objective not finite at kappa = {}",
                lk.exp()
            )));
        }
        Ok((v, m))
    };

    let grid: Vec<f64> = (0..KAPPA_GRID)
        .map(|i| top * i as f64 / (KAPPA_GRID - 1) as f64)
        .collect();
    let mut best = (0, f64::INFINITY);
    for (i, &lk) in grid.iter().enumerate() {
        let v = eval(lk)?.0;
        if v < best.1 {
            best = (i, v);
        }
    }
    let flagged = best.0 == 0 || best.0 == KAPPA_GRID - 1;
    let (mut a, mut b) = (
        grid[best.0.saturating_sub(1)],
        grid[(best.0 + 1).min(KAPPA_GRID - 1)],
    );

    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (eval(c)?.0, eval(d)?.0);
    // |Δκ|/κ ≈ |Δ log κ|
    while b - a > KAPPA_REL_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c)?.0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d)?.0;
        }
    }
    let lk = 0.5 * (a + b);
    let (value, m) = eval(lk)?;
    Ok(KappaOptimum {
        kappa: lk.exp(),
        value,
        moments: m,
        flagged,
    })
}

/// Predicted exponent of σ_y versus N with per-N optimized T. Absolute
/// exponents are tabulated for white noise only.
pub fn predicted_exponent(
    feedback: FeedbackKind,
    noise: NoiseKind,
    state: StateKind,
) -> Result<f64> {
    use FeedbackKind::*;
    use StateKind::*;
    match (noise, feedback, state) {
        (NoiseKind::WhiteFm, Linear, Uncorrelated) => Ok(-1.0 / 3.0),
        (NoiseKind::WhiteFm, Linear, Squeezed) => Ok(-1.0 / 2.0),
        (NoiseKind::WhiteFm, Nonlinear, Uncorrelated) => Ok(-1.0 / 2.0),
        (NoiseKind::WhiteFm, Nonlinear, Squeezed) => Ok(-2.0 / 3.0),
        _ => Err(Error::invalid(format!(
            "no tabulated absolute exponent for {} feedback with {} noise",
            feedback.as_str(),
            noise.as_str()
        ))),
    }
}

/// Predicted exponent difference (squeezed minus uncorrelated).
pub fn predicted_improvement(feedback: FeedbackKind, noise: NoiseKind) -> Result<f64> {
    match (noise, feedback) {
        (NoiseKind::WhiteFm, _) => Ok(-1.0 / 6.0),
        (NoiseKind::FlickerFm, FeedbackKind::Nonlinear) => Ok(-1.0 / 6.0),
        (NoiseKind::FlickerFm, FeedbackKind::Linear) => Ok(-5.0 / 24.0),
        (NoiseKind::None, _) => Err(Error::invalid("no improvement without LO noise")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryPrediction {
    pub sigma_y: f64,
    pub zeta: f64,
    pub gamma_t_opt: f64,
    pub kappa_opt: Option<f64>,
    pub scaling_exponent: Option<f64>,
}

/// Bundles the predictions for one state at its optimal Ramsey time.
pub fn predict(
    m: &StateMoments,
    feedback: FeedbackKind,
    noise: NoiseKind,
    state: StateKind,
    gamma: f64,
    tau: f64,
    omega: f64,
) -> Result<TheoryPrediction> {
    let gamma_t_opt = optimal_gamma_t(m, feedback, noise)?;
    let sigma_y = sigma_y_theory(
        m,
        lo_phase_variance(noise, gamma_t_opt),
        0.0,
        0.0,
        gamma_t_opt / gamma,
        tau,
        omega,
    );
    let kappa_opt = match state {
        StateKind::Squeezed => Some(optimize_kappa(m.n_atoms, feedback, noise)?.kappa),
        StateKind::Uncorrelated => None,
    };
    Ok(TheoryPrediction {
        sigma_y,
        zeta: zeta(m),
        gamma_t_opt,
        kappa_opt,
        scaling_exponent: predicted_exponent(feedback, noise, state).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fit_scaling;
    use crate::spinstate::{asymptotic_gaussian_moments, uncorrelated_moments, MomentMethod};

    fn unc(n: u64) -> StateMoments {
        uncorrelated_moments(&EnsembleSpec::uncorrelated(n).unwrap()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn sigma_y_examples() {
        let m = unc(1000);
        let s = sigma_y_theory(&m, 0.0, 0.0, 0.0, 0.5, 8.0, 3.0);
        assert!(rel(s, m.dj_y() / (3.0 * 2.0 * m.jz_mean)) < 1e-15);
        assert_eq!(
            sigma_y_theory(&m, 0.0, 0.0, 0.0, 0.5, 8.0, 3.0),
            sigma_y_theory(&m, 5.0, 0.0, 0.0, 0.5, 8.0, 3.0)
        );
        // independent dephasing: total noise (N/4)(1 + ⟨δφ_E^2⟩)
        let lambda = 250.0 / m.jz_sq_mean();
        let s = sigma_y_theory(&m, 0.0, 0.04, lambda, 1.0, 1.0, 1.0);
        assert!(rel(s, (250.0_f64 * 1.04).sqrt() / 500.0) < 1e-14);
    }

    #[test]
    fn sigma_y_monotone() {
        let m = moments(&EnsembleSpec::gaussian(1000, 6.0).unwrap()).unwrap();
        let base = [0.01, 0.02, 0.5, 1.0, 10.0, 2.0];
        let f = |a: [f64; 6]| sigma_y_theory(&m, a[0], a[1], a[2], a[3], a[4], a[5]);
        let s0 = f(base);
        for i in 0..6 {
            let mut up = base;
            up[i] *= 1.5;
            if i < 3 {
                assert!(f(up) > s0, "arg {i}");
            } else {
                assert!(f(up) < s0, "arg {i}");
            }
        }
    }

    #[test]
    fn zeta_uncorrelated_is_n_independent() {
        let want = 3.0 / 2f64.powf(4.0 / 3.0);
        assert!((want - 1.190_550_788_976_149_5).abs() < 1e-12);
        for n in [100, 10_000, 1_000_000] {
            assert!(rel(zeta(&unc(n)), want) < 1e-12);
        }
    }

    #[test]
    fn zeta_grows_with_longitudinal_noise() {
        let m = moments(&EnsembleSpec::gaussian(10_000, 10.0).unwrap()).unwrap();
        let mut inflated = m;
        inflated.var_jz *= 100.0;
        assert!(zeta(&inflated) > zeta(&m));
    }

    #[test]
    fn optimal_times() {
        assert!(
            rel(
                optimal_t_linear(&unc(100_000), 1.0),
                0.027_144_176_165_949_06
            ) < 1e-12
        );
        assert!(rel(optimal_t_linear(&unc(1000), 1.0), 0.125_992_104_989_487_3) < 1e-12);
        let mut m = unc(1000);
        let t0 = optimal_t_linear(&m, 2.0);
        m.var_jy *= 4.0;
        assert!(rel(optimal_t_linear(&m, 2.0) / t0, 2f64.powf(2.0 / 3.0)) < 1e-12);
        assert_eq!(optimal_t_nonlinear(1.0), 0.1);
        assert!(rel(optimal_t_nonlinear(10.0), 0.01) < 1e-15);
        let ratio = optimal_t_nonlinear(1.0) / optimal_t_linear(&unc(100_000), 1.0);
        assert!((ratio - 3.684).abs() < 1e-3);
    }

    #[test]
    fn rule_t_and_zeta_differ_by_fixed_ratio() {
        // the ζ form carries the cubic breakdown cost that the long-τ
        // formula omits, so the two agree only up to 2^{7/6}/3
        let gamma = 2.0;
        let tau = 50.0;
        let omega = 7.0;
        for n in [100_u64, 10_000, 1_000_000] {
            let m = unc(n);
            let t = optimal_t_linear(&m, gamma);
            let s = sigma_y_theory(&m, gamma * t, 0.0, 0.0, t, tau, omega);
            let z = zeta(&m) * (n as f64).powf(-1.0 / 3.0) * gamma / (omega * (gamma * tau).sqrt());
            assert!(rel(s / z, 2f64.powf(7.0 / 6.0) / 3.0) < 1e-12);
        }
    }

    /// ζ N^{1/6} under the leading-order large-N moments with κ = a N^{1/4}:
    /// ΔJ_y/J = a N^{-3/4} and (ΔJ_z/J)^2 = 1/(2 a^4 N).
    fn leading_order_zeta(a: f64) -> f64 {
        3.0 / 2f64.powf(4.0 / 3.0) * (a.powf(4.0 / 3.0) + 2f64.cbrt() / (3.0 * a.powi(4))).sqrt()
    }

    #[test]
    fn leading_order_optimum_constants() {
        let mut best = (0.0, f64::INFINITY);
        for i in 0..200_000 {
            let a = 0.8 + 0.5 * i as f64 / 200_000.0;
            let z = leading_order_zeta(a);
            if z < best.1 {
                best = (a, z);
            }
        }
        assert!((best.0 - 2f64.powf(1.0 / 16.0)).abs() < 1e-5);
        let closed = 3.0 / 2f64.powf(4.0 / 3.0) * (4.0f64 / 3.0).sqrt() * 2f64.powf(1.0 / 24.0);
        assert!((best.1 - closed).abs() < 1e-9);
        assert!((closed - 1.415_01).abs() < 1e-5);
    }

    #[test]
    fn white_linear_optimum_at_large_n() {
        let n = 100_000_000_u64;
        let opt = optimize_kappa(n, FeedbackKind::Linear, NoiseKind::WhiteFm).unwrap();
        assert!(!opt.flagged);
        assert_eq!(opt.moments.method, MomentMethod::Asymptotic);
        let a = opt.kappa / (n as f64).powf(0.25);
        assert!((1.034..=1.054).contains(&a), "kappa ratio {a}");
        let z = opt.value * (n as f64).powf(1.0 / 6.0);
        assert!((1.40..=1.43).contains(&z), "zeta {z}");
        assert!(rel(z, 1.415_01) < 0.02);
    }

    #[test]
    fn white_linear_zeta_decreases_toward_limit() {
        let mut prev = f64::INFINITY;
        for n in [1_000_u64, 100_000, 10_000_000, 100_000_000] {
            let opt = optimize_kappa(n, FeedbackKind::Linear, NoiseKind::WhiteFm).unwrap();
            let z = opt.value * (n as f64).powf(1.0 / 6.0);
            assert!(z < prev, "N={n}: {z}");
            assert!(z > 1.41);
            prev = z;
        }
    }

    #[test]
    fn white_linear_optimum_at_one_million() {
        let n = 1_000_000_u64;
        let opt = optimize_kappa(n, FeedbackKind::Linear, NoiseKind::WhiteFm).unwrap();
        assert!((opt.kappa / 1000f64.sqrt() / 1.0443 - 1.0).abs() < 0.01 / 1.044);
    }

    #[test]
    fn matches_brute_force_grid_at_small_n() {
        let n = 100_u64;
        let opt = optimize_kappa(n, FeedbackKind::Linear, NoiseKind::WhiteFm).unwrap();
        let mut best = (0.0, f64::INFINITY);
        for i in 0..10_000 {
            let k = 10f64.powf(i as f64 / 9_999.0);
            let z = zeta(&moments(&EnsembleSpec::gaussian(n, k).unwrap()).unwrap());
            if z < best.1 {
                best = (k, z);
            }
        }
        assert!(rel(opt.kappa, best.0) < 2.0 * KAPPA_REL_TOL);
        assert!(rel(opt.value, best.1) < 1e-6);
    }

    #[test]
    fn nonlinear_optimum_has_cube_root_transverse_noise() {
        let pts: Vec<(f64, f64)> = [10_000_u64, 100_000, 1_000_000, 10_000_000, 100_000_000]
            .iter()
            .map(|&n| {
                let opt = optimize_kappa(n, FeedbackKind::Nonlinear, NoiseKind::WhiteFm).unwrap();
                (n as f64, opt.moments.dj_y())
            })
            .collect();
        let fit = fit_scaling(&pts).unwrap();
        assert!((fit.exponent - 1.0 / 3.0).abs() < 0.03, "{}", fit.exponent);
    }

    #[test]
    fn asymptotic_optimum_matches_leading_order() {
        let n = 1e12 as u64;
        let opt = optimize_kappa(n, FeedbackKind::Linear, NoiseKind::WhiteFm).unwrap();
        let m =
            asymptotic_gaussian_moments(&EnsembleSpec::gaussian(n, opt.kappa).unwrap()).unwrap();
        assert!(rel(zeta(&m) * (n as f64).powf(1.0 / 6.0), 1.415_01) < 1e-3);
    }

    #[test]
    fn exponent_tables() {
        use FeedbackKind::*;
        use StateKind::*;
        let w = NoiseKind::WhiteFm;
        assert_eq!(
            predicted_exponent(Linear, w, Uncorrelated).unwrap(),
            -1.0 / 3.0
        );
        assert_eq!(
            predicted_exponent(Nonlinear, w, Squeezed).unwrap(),
            -2.0 / 3.0
        );
        assert!(predicted_exponent(Linear, NoiseKind::FlickerFm, Uncorrelated).is_err());
        assert_eq!(
            predicted_improvement(Linear, NoiseKind::FlickerFm).unwrap(),
            -5.0 / 24.0
        );
        assert_eq!(
            predicted_improvement(Nonlinear, NoiseKind::FlickerFm).unwrap(),
            -1.0 / 6.0
        );
        for f in [Linear, Nonlinear] {
            let d = predicted_exponent(f, w, Squeezed).unwrap()
                - predicted_exponent(f, w, Uncorrelated).unwrap();
            assert!((d - predicted_improvement(f, w).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn prediction_bundle() {
        let m = unc(100_000);
        let p = predict(
            &m,
            FeedbackKind::Nonlinear,
            NoiseKind::WhiteFm,
            StateKind::Uncorrelated,
            1.0,
            10.0,
            1.0,
        )
        .unwrap();
        assert!(p.gamma_t_opt <= 0.1);
        assert_eq!(p.scaling_exponent, Some(-0.5));
        assert!(optimize_kappa(50, FeedbackKind::Linear, NoiseKind::WhiteFm).is_err());
    }
}
