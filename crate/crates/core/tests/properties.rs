use proptest::prelude::*;

use squeezeclock_core::analysis::fit_scaling;
use squeezeclock_core::lonoise::{accumulate_phase, NoiseTrajectory};
use squeezeclock_core::spinstate::{kappa_for_xi, moments, EnsembleSpec};
use squeezeclock_core::theory::{floor_coeff_theory, sigma_y_theory, zeta};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_states_respect_uncertainty(n in 16u64..200_000, frac in 0.0f64..1.0) {
        let kappa = 1.0 + frac * ((n as f64).sqrt() - 1.0);
        let m = moments(&EnsembleSpec::gaussian(n, kappa).unwrap()).unwrap();
        prop_assert!(m.satisfies_uncertainty());
        prop_assert!(m.jz_mean > 0.0 && m.jz_mean <= n as f64 / 2.0 + 1e-9);
        prop_assert!(m.var_jy > 0.0 && m.var_jz >= 0.0);
    }

    #[test]
    fn uncorrelated_states_sit_at_the_standard_limit(n in 2u64..10_000_000) {
        let m = moments(&EnsembleSpec::uncorrelated(n).unwrap()).unwrap();
        prop_assert!((m.xi() - 1.0).abs() < 1e-12);
        prop_assert!((zeta(&m) / (3.0 / 2f64.powf(4.0 / 3.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_for_xi_inverts_the_squeezing(n in 1_000u64..100_000, t in 0.1f64..0.9) {
        let m_lo = moments(&EnsembleSpec::gaussian(n, (n as f64).sqrt()).unwrap()).unwrap();
        let target = m_lo.xi() + t * (0.9 - m_lo.xi());
        let kappa = kappa_for_xi(n, target).unwrap();
        let m = moments(&EnsembleSpec::gaussian(n, kappa).unwrap()).unwrap();
        prop_assert!((m.xi() / target - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scaling_fit_recovers_power_laws(exp in -1.0f64..1.0, a in 0.01f64..100.0) {
        let pts: Vec<(f64, f64)> = (0..7).map(|k| {
            let n = 100.0 * 10f64.powf(k as f64 / 2.0);
            (n, a * n.powf(exp))
        }).collect();
        let fit = fit_scaling(&pts).unwrap();
        prop_assert!((fit.exponent - exp).abs() < 1e-12);
        prop_assert!((fit.prefactor / a - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_frequency_accumulates_linearly(c in -10.0f64..10.0, steps in 1usize..500) {
        let traj = NoiseTrajectory::constant(0.125, 512, c).unwrap();
        let phase = accumulate_phase(&traj, 3, steps.min(509)).unwrap();
        prop_assert!((phase - c * 0.125 * steps.min(509) as f64).abs() < 1e-9 * (1.0 + c.abs() * 64.0));
    }

    #[test]
    fn stability_falls_as_inverse_root_tau(tau in 0.1f64..1e4, t in 1e-3f64..1.0, v in 0.0f64..0.5) {
        let m = moments(&EnsembleSpec::uncorrelated(1000).unwrap()).unwrap();
        let c = floor_coeff_theory(&m, v, 0.0, 0.0, t, 1.0);
        let s = sigma_y_theory(&m, v, 0.0, 0.0, t, tau, 1.0);
        prop_assert!((s * tau.sqrt() / c - 1.0).abs() < 1e-12);
    }
}
