//! Collective-spin statistics of the atomic ensemble.
//!
//! The ensemble is N pseudo-spins with total spin J = N/2, polarized along
//! +z. Two state families are supported: the uncorrelated (coherent) state
//! and the one-parameter Gaussian family whose amplitudes in the J_y
//! eigenbasis are `(-1)^m exp(-(m/kappa)^2)`. Moments of the Gaussian family
//! come either from an exact sum over the amplitudes or from closed-form
//! large-kappa expressions.
//!
//! Sign convention: the alternating phase puts the mean spin along -z. All
//! moments are reported for the state rotated by pi about y, so that
//! `jz_mean > 0`. Variances are unaffected by the rotation.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

/// Largest ensemble for which the exact summation path is used by `auto`.
pub const EXACT_MOMENTS_CAP: u64 = 10_000_000;

/// Amplitudes are summed over |m| <= SUPPORT_WIDTHS * kappa (+2); the
/// neglected tail is below exp(-144) in amplitude.
const SUPPORT_WIDTHS: f64 = 12.0;

/// Relative slack, per atom, allowed on the uncertainty relation
/// dJy * dJx >= <Jz>/2 when checking computed moments.
pub const UNCERTAINTY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateFamily {
    Uncorrelated,
    Gaussian { kappa: f64 },
}

/// Atom number plus state family. Constructed through the checked
/// constructors only, so a value in hand always satisfies the range rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    n_atoms: u64,
    family: StateFamily,
}

impl EnsembleSpec {
    pub fn uncorrelated(n_atoms: u64) -> Result<Self> {
        check_atoms(n_atoms)?;
        Ok(Self {
            n_atoms,
            family: StateFamily::Uncorrelated,
        })
    }

    pub fn gaussian(n_atoms: u64, kappa: f64) -> Result<Self> {
        check_atoms(n_atoms)?;
        let max = (n_atoms as f64).sqrt();
        if !(kappa.is_finite() && (1.0..=max * (1.0 + 1e-12)).contains(&kappa)) {
            return Err(Error::KappaOutOfRange {
                kappa,
                min: 1.0,
                max,
            });
        }
        Ok(Self {
            n_atoms,
            family: StateFamily::Gaussian { kappa },
        })
    }

    pub fn n_atoms(&self) -> u64 {
        self.n_atoms
    }

    pub fn family(&self) -> StateFamily {
        self.family
    }

    pub fn kappa(&self) -> Option<f64> {
        match self.family {
            StateFamily::Gaussian { kappa } => Some(kappa),
            StateFamily::Uncorrelated => None,
        }
    }

    /// J = N/2.
    pub fn total_spin(&self) -> f64 {
        self.n_atoms as f64 / 2.0
    }
}

fn check_atoms(n_atoms: u64) -> Result<()> {
    if n_atoms < 2 {
        return Err(Error::invalid(format!(
            "ensemble needs at least 2 atoms, got {n_atoms}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMethod {
    Exact,
    Asymptotic,
}

impl MomentMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            MomentMethod::Exact => "exact",
            MomentMethod::Asymptotic => "asymptotic",
        }
    }
}

/// First and second moments of the initial collective spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMoments {
    pub n_atoms: u64,
    /// <J_z>, always positive.
    pub jz_mean: f64,
    pub var_jy: f64,
    pub var_jz: f64,
    pub var_jx: f64,
    pub method: MomentMethod,
}

impl StateMoments {
    /// Squeezing parameter sqrt(N) dJy / <Jz>.
    pub fn xi(&self) -> f64 {
        (self.n_atoms as f64).sqrt() * self.var_jy.sqrt() / self.jz_mean
    }

    pub fn dj_y(&self) -> f64 {
        self.var_jy.sqrt()
    }

    pub fn dj_z(&self) -> f64 {
        self.var_jz.sqrt()
    }

    pub fn dj_x(&self) -> f64 {
        self.var_jx.sqrt()
    }

    /// <J_z^2> = var + mean^2.
    pub fn jz_sq_mean(&self) -> f64 {
        self.var_jz + self.jz_mean * self.jz_mean
    }

    /// Heisenberg bound dJy dJx >= <Jz>/2, with `UNCERTAINTY_TOLERANCE * N` slack.
    pub fn satisfies_uncertainty(&self) -> bool {
        self.dj_y() * self.dj_x()
            >= self.jz_mean / 2.0 - UNCERTAINTY_TOLERANCE * self.n_atoms as f64
    }
}

/// ΔJ_y = sqrt(N)/2, ΔJ_z = 0, <J_z> = N/2.
pub fn uncorrelated_moments(spec: &EnsembleSpec) -> Result<StateMoments> {
    if spec.family != StateFamily::Uncorrelated {
        return Err(Error::invalid(
            "uncorrelated_moments needs the uncorrelated family",
        ));
    }
    let n = spec.n_atoms as f64;
    Ok(StateMoments {
        n_atoms: spec.n_atoms,
        jz_mean: n / 2.0,
        var_jy: n / 4.0,
        var_jz: 0.0,
        var_jx: n / 4.0,
        method: MomentMethod::Exact,
    })
}

/// Normalized Gaussian amplitudes on the truncated J_y ladder.
struct GaussianLadder {
    j: f64,
    /// m values, ascending in unit steps
    ms: Vec<f64>,
    /// normalized positive amplitudes (rotated convention)
    amps: Vec<f64>,
}

impl GaussianLadder {
    fn new(spec: &EnsembleSpec) -> Result<Self> {
        let kappa = match spec.family {
            StateFamily::Gaussian { kappa } => kappa,
            StateFamily::Uncorrelated => {
                return Err(Error::invalid("Gaussian moments need the gaussian family"))
            }
        };
        let j = spec.total_spin();
        let limit = (SUPPORT_WIDTHS * kappa + 2.0).min(j);
        // m = -J + i, i = 0..=N
        let first = (j - limit).ceil().max(0.0) as u64;
        let last = spec.n_atoms - first;
        let ms: Vec<f64> = (first..=last).map(|i| i as f64 - j).collect();
        let mut amps: Vec<f64> = ms.iter().map(|m| (-(m / kappa).powi(2)).exp()).collect();
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { j, ms, amps })
    }

    /// Matrix element of J_+ from |m> to |m+1>.
    fn raise(&self, m: f64) -> f64 {
        ((self.j - m) * (self.j + m + 1.0)).max(0.0).sqrt()
    }

    /// (J_z psi)_m and 2i (J_x psi)_m on the support.
    fn jz_jx_images(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.ms.len();
        let mut jz = Vec::with_capacity(n);
        let mut jx = Vec::with_capacity(n);
        for i in 0..n {
            let from_below = if i > 0 {
                self.raise(self.ms[i - 1]) * self.amps[i - 1]
            } else {
                0.0
            };
            let from_above = if i + 1 < n {
                self.raise(self.ms[i]) * self.amps[i + 1]
            } else {
                0.0
            };
            jz.push(0.5 * (from_below + from_above));
            jx.push(0.5 * (from_below - from_above));
        }
        (jz, jx)
    }

    fn moments(&self, n_atoms: u64) -> StateMoments {
        let (jz_img, jx_img) = self.jz_jx_images();
        let jz_mean: f64 = self.amps.iter().zip(&jz_img).map(|(a, u)| a * u).sum();
        // residual form avoids cancelling <Jz^2> against <Jz>^2
        let var_jz: f64 = self
            .amps
            .iter()
            .zip(&jz_img)
            .map(|(a, u)| (u - jz_mean * a).powi(2))
            .sum();
        let var_jx: f64 = jx_img.iter().map(|v| v * v).sum();
        let var_jy: f64 = self
            .ms
            .iter()
            .zip(&self.amps)
            .map(|(m, a)| m * m * a * a)
            .sum();
        StateMoments {
            n_atoms,
            jz_mean,
            var_jy,
            var_jz,
            var_jx,
            method: MomentMethod::Exact,
        }
    }
}

/// Exact moments of the Gaussian state by summation over its J_y-basis
/// amplitudes. Cost is O(kappa), independent of N.
pub fn exact_gaussian_moments(spec: &EnsembleSpec) -> Result<StateMoments> {
    Ok(GaussianLadder::new(spec)?.moments(spec.n_atoms))
}

/// `<J_y>` and the symmetrized covariance `<J_y J_z + J_z J_y>/2 - <J_y><J_z>`
/// of the exact Gaussian state. Both vanish for the symmetric amplitude profile.
pub fn exact_yz_residuals(spec: &EnsembleSpec) -> Result<(f64, f64)> {
    let ladder = GaussianLadder::new(spec)?;
    let (jz_img, _) = ladder.jz_jx_images();
    let mean_jy: f64 = ladder
        .ms
        .iter()
        .zip(&ladder.amps)
        .map(|(m, a)| m * a * a)
        .sum();
    let jz_mean: f64 = ladder.amps.iter().zip(&jz_img).map(|(a, u)| a * u).sum();
    let sym: f64 = ladder
        .ms
        .iter()
        .zip(ladder.amps.iter().zip(&jz_img))
        .map(|(m, (a, u))| m * a * u)
        .sum();
    Ok((mean_jy, sym - mean_jy * jz_mean))
}

/// Range of kappa, `[3, sqrt(N)/3]`, over which the closed forms below are
/// validated against the exact sum to 5%.
pub fn asymptotic_window(n_atoms: u64) -> (f64, f64) {
    (3.0, (n_atoms as f64).sqrt() / 3.0)
}

pub fn in_asymptotic_window(spec: &EnsembleSpec) -> bool {
    let (lo, hi) = asymptotic_window(spec.n_atoms);
    spec.kappa().is_some_and(|k| k >= lo && k <= hi)
}

/// Large-kappa closed forms for the Gaussian family.
///
/// For J >> 1 the state is a Gaussian of width 1/kappa in the angle conjugate
/// to J_y, so J_z ~ J cos(theta), J_x ~ J sin(theta):
///
/// - var_jy = kappa^2 / 4
/// - jz_mean = J exp(-1/(2 kappa^2)) (1 - kappa^2/(8 J^2))
/// - var_jz = (J^2/2) (1 - exp(-1/kappa^2))^2  ~ J^2 / (2 kappa^4)
/// - var_jx = (J^2/2) (1 - exp(-2/kappa^2))    ~ J^2 / kappa^2
///
/// Accurate to a few percent inside [`asymptotic_window`]; callers outside it
/// get the same formulas without a guarantee.
pub fn asymptotic_gaussian_moments(spec: &EnsembleSpec) -> Result<StateMoments> {
    let kappa = spec
        .kappa()
        .ok_or_else(|| Error::invalid("Gaussian moments need the gaussian family"))?;
    let j = spec.total_spin();
    let k2 = kappa * kappa;
    let jz_mean = j * (-0.5 / k2).exp() * (1.0 - k2 / (8.0 * j * j));
    let var_jz = 0.5 * j * j * (-(-1.0 / k2).exp_m1()).powi(2);
    let var_jx = -0.5 * j * j * (-2.0 / k2).exp_m1();
    Ok(StateMoments {
        n_atoms: spec.n_atoms,
        jz_mean,
        var_jy: k2 / 4.0,
        var_jz,
        var_jx,
        method: MomentMethod::Asymptotic,
    })
}

/// Strategy for turning an [`EnsembleSpec`] into moments.
pub trait MomentSolver: Named + Send + Sync {
    fn moments(&self, spec: &EnsembleSpec) -> Result<StateMoments>;
}

/// Closed form for uncorrelated states; exact sum up to the cap, asymptotic beyond.
pub struct AutoMoments;
pub struct ExactMoments;
pub struct AsymptoticMoments;

impl Named for AutoMoments {
    fn name(&self) -> &'static str {
        "auto"
    }
}

impl MomentSolver for AutoMoments {
    fn moments(&self, spec: &EnsembleSpec) -> Result<StateMoments> {
        match spec.family {
            StateFamily::Uncorrelated => uncorrelated_moments(spec),
            StateFamily::Gaussian { .. } if spec.n_atoms <= EXACT_MOMENTS_CAP => {
                exact_gaussian_moments(spec)
            }
            StateFamily::Gaussian { .. } => asymptotic_gaussian_moments(spec),
        }
    }
}

impl Named for ExactMoments {
    fn name(&self) -> &'static str {
        "exact"
    }
}

impl MomentSolver for ExactMoments {
    fn moments(&self, spec: &EnsembleSpec) -> Result<StateMoments> {
        match spec.family {
            StateFamily::Uncorrelated => uncorrelated_moments(spec),
            StateFamily::Gaussian { .. } => exact_gaussian_moments(spec),
        }
    }
}

impl Named for AsymptoticMoments {
    fn name(&self) -> &'static str {
        "asymptotic"
    }
}

impl MomentSolver for AsymptoticMoments {
    fn moments(&self, spec: &EnsembleSpec) -> Result<StateMoments> {
        match spec.family {
            StateFamily::Uncorrelated => uncorrelated_moments(spec),
            StateFamily::Gaussian { .. } => asymptotic_gaussian_moments(spec),
        }
    }
}

pub fn moment_solvers() -> Registry<dyn MomentSolver> {
    Registry::<dyn MomentSolver>::new("moment solver")
        .with(Arc::new(AutoMoments))
        .with(Arc::new(ExactMoments))
        .with(Arc::new(AsymptoticMoments))
}

/// Moments through the `auto` solver.
pub fn moments(spec: &EnsembleSpec) -> Result<StateMoments> {
    AutoMoments.moments(spec)
}

/// Gaussian-family width whose squeezing parameter equals `target_xi`.
/// Bisection in log(kappa); xi is increasing in kappa on [1, sqrt(N)].
pub fn kappa_for_xi(n_atoms: u64, target_xi: f64) -> Result<f64> {
    let xi_at = |k: f64| -> Result<f64> { Ok(moments(&EnsembleSpec::gaussian(n_atoms, k)?)?.xi()) };
    let (mut lo, mut hi) = (0.0_f64, (n_atoms as f64).sqrt().ln());
    let (xi_lo, xi_hi) = (xi_at(1.0)?, xi_at(hi.exp())?);
    if !(xi_lo..=xi_hi).contains(&target_xi) {
        return Err(Error::invalid(format!(
            "xi = {target_xi} not reachable for N = {n_atoms} (range [{xi_lo}, {xi_hi}])"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if xi_at(mid.exp())? < target_xi {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp().min((n_atoms as f64).sqrt()))
}

/// One realization of the transverse and longitudinal spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomicSample {
    pub jy: f64,
    pub jz: f64,
}

/// Independent Gaussian draws `jy ~ N(0, var_jy)`, `jz ~ N(jz_mean, var_jz)`.
///
/// The true J_y spectrum is discrete; the Gaussian stand-in is accurate for
/// N >> 1 and only the first two moments enter the loop. Two normals are
/// consumed per call regardless of the variances, which keeps streams aligned
/// between runs that differ only in state.
pub fn sample_atomic_noise<R: Rng + ?Sized>(moments: &StateMoments, rng: &mut R) -> AtomicSample {
    let zy: f64 = rng.sample(StandardNormal);
    let zz: f64 = rng.sample(StandardNormal);
    AtomicSample {
        jy: moments.var_jy.sqrt() * zy,
        jz: moments.jz_mean + moments.var_jz.sqrt() * zz,
    }
}
