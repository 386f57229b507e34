mod common;

use proptest::prelude::*;
use qsens_core::estimation::linear_fit;
use qsens_core::kinetics::*;

#[test]
fn closed_form_matches_binding_ode_at_one_time_constant() {
    let (ka, kd, l0) = (672.2, 0.01, 4.659e-5);
    let ks = observable_rate(ka, l0, kd).unwrap();
    let t = 1.0 / ks;
    let theta_eq = ka * l0 / ks;
    // Normalised bound fraction scaled to a 0.04 swing.
    let ode = 0.04 * common::rk4_bound_fraction(ka, kd, l0, t, 20_000) / theta_eq;
    let closed = model_transmission(t, 0.04, ks, 0.0).unwrap();
    assert!((ode - closed).abs() < 1e-12, "{ode} vs {closed}");
    assert!((closed - 0.025285).abs() < 1e-6);
}

#[test]
fn ode_agrees_along_the_whole_association() {
    let (ka, kd, l0) = (672.2, 0.01, 2.330e-5);
    let ks = observable_rate(ka, l0, kd).unwrap();
    let theta_eq = ka * l0 / ks;
    for k in 1..=20 {
        let t = 5.0 * k as f64;
        let ode = common::rk4_bound_fraction(ka, kd, l0, t, 10_000) / theta_eq;
        assert!((ode - model_transmission(t, 1.0 - 1e-12, ks, 0.0).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn injection_concentration_series() {
    let recipe = |m: f64| InjectionRecipe {
        dry_mass: m,
        molar_mass: 66430.0,
        solvent_volume: 10e-3,
        injected_volume: 0.13e-3,
        cavity_volume: 0.5e-3,
    };
    for (mass, expected) in [(0.15, 4.659e-5), (0.10, 3.106e-5), (0.075, 2.330e-5), (0.05, 1.553e-5)] {
        let l0 = cavity_concentration(&recipe(mass)).unwrap();
        assert!((l0 - expected).abs() / expected < 1e-3, "{mass} g -> {l0}");
    }
    assert_eq!(cavity_concentration(&recipe(0.0)).unwrap(), 0.0);
}

#[test]
fn reciprocal_plot_round_trip() {
    let (affinity, alpha) = (6.7e4, 12.0);
    let l0s = [4.659e-5, 3.106e-5, 2.330e-5, 1.553e-5];
    let xs: Vec<f64> = l0s.iter().map(|l| 1.0 / l).collect();
    let ys: Vec<f64> = xs.iter().map(|x| alpha / affinity * x + alpha).collect();
    let fit = linear_fit(&xs, &ys).unwrap();
    let (ka_fit, alpha_fit) = affinity_from_reciprocal_fit(fit.slope, fit.intercept).unwrap();
    assert!((ka_fit - affinity).abs() / affinity < 1e-9);
    assert!((alpha_fit - alpha).abs() / alpha < 1e-9);
}

#[test]
fn langmuir_amplitudes_lie_on_the_reciprocal_line() {
    let (affinity, sat) = (6.72e4, 0.0528);
    let l0s = [4.659e-5, 3.106e-5, 2.330e-5, 1.553e-5];
    let xs: Vec<f64> = l0s.iter().map(|l| 1.0 / l).collect();
    let ys: Vec<f64> = l0s.iter().map(|&l| 1.0 / langmuir_amplitude(sat, affinity, l)).collect();
    let fit = linear_fit(&xs, &ys).unwrap();
    let (ka_fit, alpha) = affinity_from_reciprocal_fit(fit.slope, fit.intercept).unwrap();
    assert!((ka_fit - affinity).abs() / affinity < 1e-9);
    assert!((alpha - 1.0 / sat).abs() * sat < 1e-9);
}

#[test]
fn weak_binding_limit() {
    let (kd, ka) = rates_from_affinity(0.05, 1e-3, 1e-6).unwrap();
    assert!((kd - 0.05).abs() / 0.05 < 1e-8);
    assert!((ka - 1e-3 * 0.05).abs() / (1e-3 * 0.05) < 1e-8);
}

#[test]
fn sensorgram_with_zero_rate_is_flat() {
    let p = KineticParams::from_rates(0.0, 0.0, 0.0, 0.04).unwrap();
    let s = generate_sensorgram(&p, 0.06, &[0.0, 10.0, 100.0]).unwrap();
    assert_eq!(s.mean, vec![0.06; 3]);
    assert!(generate_sensorgram(&p, 0.06, &[]).is_err());
    assert!(generate_sensorgram(&p, 0.06, &[1.0, 1.0]).is_err());
}

proptest! {
    #[test]
    fn association_is_monotone(
        t1 in 0.0..500.0f64, dt in 0.0..500.0f64,
        t_inf in 0.0..0.5f64, t0 in 0.0..0.5f64, ks in 0.0..1.0f64,
    ) {
        let a = model_transmission(t1, t_inf, ks, t0).unwrap();
        let b = model_transmission(t1 + dt, t_inf, ks, t0).unwrap();
        prop_assert!(b >= a);
    }

    #[test]
    fn asymptote_bound(t in 0.0..1000.0f64, t_inf in 0.0..0.5f64, t0 in 0.0..0.5f64, ks in 0.0..1.0f64) {
        let v = model_transmission(t, t_inf, ks, t0).unwrap();
        prop_assert!((v - (t0 + t_inf)).abs() <= t_inf * (-ks * t).exp() * (1.0 + 1e-12) + 2.0 * f64::EPSILON * (t0 + t_inf));
    }

    #[test]
    fn rate_split_closes(ks in 1e-4..1.0f64, affinity in 1.0..1e7f64, l0 in 1e-8..1e-3f64) {
        let (kd, ka) = rates_from_affinity(ks, affinity, l0).unwrap();
        let back = observable_rate(ka, l0, kd).unwrap();
        prop_assert!((back - ks).abs() <= 1e-12 * ks);
        prop_assert!(((ka / kd) - affinity).abs() <= 1e-12 * affinity);
    }

    #[test]
    fn concentration_is_linear_in_mass(mass in 1e-4..1.0f64) {
        let recipe = |m: f64| InjectionRecipe {
            dry_mass: m, molar_mass: 66430.0, solvent_volume: 10e-3,
            injected_volume: 0.13e-3, cavity_volume: 0.5e-3,
        };
        let one = cavity_concentration(&recipe(mass)).unwrap();
        let two = cavity_concentration(&recipe(2.0 * mass)).unwrap();
        prop_assert_eq!(two, 2.0 * one);
    }
}
