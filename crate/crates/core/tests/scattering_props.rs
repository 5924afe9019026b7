use proptest::prelude::*;
use qdphase::scattering::{
    bloch_oracle_steady_state, phase_extrema_analytic, phase_extrema_numeric, scatter_response,
    steady_state_bloch,
};
use qdphase::{Drive, DriveState, EmitterParams};

fn coupling_any() -> impl Strategy<Value = (bool, f64)> {
    (any::<bool>(), 0.0..=1.0f64)
}

fn emitter(chiral: bool, b: f64, gamma: f64, gamma_dp: f64) -> EmitterParams {
    if chiral {
        EmitterParams::chiral(gamma, gamma_dp, b).unwrap()
    } else {
        EmitterParams::isotropic(gamma, gamma_dp, b).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_matches_rk4(
        gamma in 1.0..30.0f64,
        gamma_dp in 0.0..10.0f64,
        omega in 0.0..20.0f64,
        delta in -50.0..50.0f64,
        beta in 0.0..=1.0f64,
    ) {
        let p = EmitterParams::isotropic(gamma, gamma_dp, beta).unwrap();
        let d = DriveState::rabi(delta, omega);
        let a = steady_state_bloch(&p, &d).unwrap();
        let b = bloch_oracle_steady_state(&p, &d).unwrap();
        prop_assert!((a.rho_ee - b.rho_ee).abs() < 1e-8);
        prop_assert!((a.rho_ge - b.rho_ge).norm() < 1e-8);
    }

    #[test]
    fn coherent_equality_without_dephasing(
        (chiral, b) in coupling_any(),
        gamma in 1.0..30.0f64,
        delta in -100.0..100.0f64,
    ) {
        let p = emitter(chiral, b, gamma, 0.0);
        let r = scatter_response(&p, &DriveState::rabi(delta, 1e-6 * gamma)).unwrap();
        prop_assert!((r.i_t - r.t.norm_sqr()).abs() <= 1e-9);
    }

    #[test]
    fn incoherent_excess_is_non_negative(
        (chiral, b) in coupling_any(),
        gamma in 0.1..50.0f64,
        gamma_dp in 0.0..50.0f64,
        omega in 0.0..100.0f64,
        delta in -200.0..200.0f64,
    ) {
        let p = emitter(chiral, b, gamma, gamma_dp);
        let r = scatter_response(&p, &DriveState::rabi(delta, omega)).unwrap();
        prop_assert!(r.incoherent_excess() >= -1e-12, "{}", r.incoherent_excess());
    }

    #[test]
    fn detuning_symmetry(
        (chiral, b) in coupling_any(),
        gamma in 0.1..50.0f64,
        gamma_dp in 0.0..20.0f64,
        omega in 0.0..20.0f64,
        delta in 0.0..200.0f64,
    ) {
        let p = emitter(chiral, b, gamma, gamma_dp);
        let plus = scatter_response(&p, &DriveState::rabi(delta, omega)).unwrap();
        let minus = scatter_response(&p, &DriveState::rabi(-delta, omega)).unwrap();
        prop_assert_eq!(plus.i_t, minus.i_t);
        prop_assert!((plus.t.arg() + minus.t.arg()).abs() < 1e-12 || (plus.t.arg().abs() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn high_power_transparency(
        (chiral, b) in coupling_any(),
        gamma in 0.1..50.0f64,
        gamma_dp in 0.0..20.0f64,
        delta in -50.0..50.0f64,
    ) {
        let p = emitter(chiral, b, gamma, gamma_dp);
        let r = scatter_response(&p, &DriveState::rabi(delta, 1e6 * (gamma + gamma_dp + delta.abs()))).unwrap();
        prop_assert!((r.t - 1.0).norm() < 1e-6);
        prop_assert!((r.i_t - 1.0).abs() < 1e-6);
    }

    #[test]
    fn half_chiral_is_ideal_isotropic(
        gamma in 0.1..50.0f64,
        gamma_dp in 0.0..20.0f64,
        omega in 0.0..50.0f64,
        delta in -100.0..100.0f64,
    ) {
        let iso = EmitterParams::isotropic(gamma, gamma_dp, 1.0).unwrap();
        let chi = EmitterParams::chiral(gamma, gamma_dp, 0.5).unwrap();
        let d = DriveState::rabi(delta, omega);
        let a = scatter_response(&iso, &d).unwrap();
        let b = scatter_response(&chi, &d).unwrap();
        prop_assert!((a.t - b.t).norm() <= 1e-12);
        prop_assert!((a.i_t - b.i_t).abs() <= 1e-12);
    }

    #[test]
    fn phase_max_non_increasing_in_drive_and_dephasing(
        gamma in 1.0..30.0f64,
        gamma_dp in 0.0..10.0f64,
        beta in 0.05..=1.0f64,
    ) {
        let p = EmitterParams::isotropic(gamma, gamma_dp, beta).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..12 {
            let omega = gamma * (k as f64 * 0.25);
            let v = phase_extrema_numeric(&p, Drive::Rabi(omega)).unwrap().phi_max.abs();
            prop_assert!(v <= last + 1e-10, "Ω={omega}: {v} > {last}");
            last = v;
        }
        let mut last = f64::INFINITY;
        for k in 0..12 {
            let q = EmitterParams::isotropic(gamma, gamma_dp + k as f64 * 0.5, beta).unwrap();
            let v = phase_extrema_numeric(&q, Drive::LinearResponse).unwrap().phi_max.abs();
            prop_assert!(v <= last + 1e-10);
            last = v;
        }
    }
}

#[test]
fn numeric_extremum_matches_analytic_on_beta_grid() {
    let mut betas: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    betas.extend([0.95, 0.99]);
    for beta in betas {
        let p = EmitterParams::isotropic(9.4, 0.0, beta).unwrap();
        let a = phase_extrema_analytic(&p).unwrap();
        let n = phase_extrema_numeric(&p, Drive::LinearResponse).unwrap();
        assert!((a.phi_max - n.phi_max.abs()).abs() < 1e-6, "β={beta}");
        assert!((n.delta_star.abs() - a.delta_plus).abs() < 1e-6 * p.gamma.max(1.0), "β={beta}");
    }
}
