mod common;

use mimo_sme::capacity::{
    average_capacity, capacity_bits, channel_matrix, dipole_array_smcs, dipole_projection_residual, mean_hh, realization_rng, CapacityConfig,
    DipoleArray, Scheme,
};
use mimo_sme::modes::ModeIndex;
use mimo_sme::channel::{draw_rays, AngularProfile, Antenna, Polarization, Side};
use mimo_sme::optimizer::{channel_correlation, side_correlation};
use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;

fn modal(s: &common::Setup, q: &DMatrix<Complex64>) -> Antenna {
    Antenna::modes(s.trunc, q.clone()).unwrap()
}

#[test]
fn monte_carlo_correlation_matches_mode_correlation() {
    let s = common::setup(0.2, 48, 96);
    let n = 2000;
    let profile = AngularProfile::Gaussian(common::scenario_profile(0.2));
    let mc = mean_hh(&modal(&s, &s.dipoles), &modal(&s, &s.dipoles), &profile, 200, n, 21).unwrap();
    let r = side_correlation(&s.integ, Side::Rx, &s.basis, &s.basis, &s.dipoles).unwrap();
    let exact = channel_correlation(&s.dipoles, &r).unwrap();
    let scale = exact.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let tol = 5.0 / (n as f64).sqrt() * scale;
    for (a, b) in mc.iter().zip(exact.iter()) {
        assert!((a - b).norm() < tol, "{a} vs {b} (tol {tol})");
    }
}

#[test]
fn siso_rayleigh_matches_integral() {
    let profile = AngularProfile::Isotropic(Polarization::Theta);
    let schemes = vec![Scheme {
        name: "omni".into(),
        tx: Antenna::Isotropic,
        rx: Antenna::Isotropic,
    }];
    let cfg = CapacityConfig {
        snr_db: vec![0.0, 15.0, 30.0],
        n_realizations: 4000,
        n_rays: 200,
    };
    let c = average_capacity(&schemes, &profile, &cfg, 4).unwrap();
    for p in &c[0].points {
        let oracle = common::rayleigh_capacity(10f64.powf(p.snr_db / 10.0));
        assert!((p.mean - oracle).abs() < 3.0 * p.stderr, "{} dB: {} vs {} ± {}", p.snr_db, p.mean, oracle, p.stderr);
    }
}

#[test]
fn capacity_basics() {
    let h = DMatrix::from_fn(2, 2, |i, j| Complex64::new(0.3 + i as f64, -0.2 * j as f64));
    let mut last = 0.0;
    for snr in [0.0, 1e-3, 0.1, 1.0, 10.0, 100.0] {
        let c = capacity_bits(&h, snr);
        assert!(c >= last - 1e-15);
        last = c;
    }
    assert!(capacity_bits(&h, 0.0).abs() < 1e-15);
    let rot = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![Complex64::from_polar(1.0, 1.0), Complex64::from_polar(1.0, -0.4)]));
    assert!((capacity_bits(&(&h * &rot), 3.0) - capacity_bits(&h, 3.0)).abs() < 1e-12);
    assert!((capacity_bits(&(&rot * &h), 3.0) - capacity_bits(&h, 3.0)).abs() < 1e-12);
}

#[test]
fn identical_seed_identical_curves() {
    let s = common::setup(0.2, 16, 32);
    let profile = AngularProfile::Gaussian(common::scenario_profile(0.2));
    let schemes = vec![Scheme {
        name: "dipole".into(),
        tx: modal(&s, &s.dipoles),
        rx: modal(&s, &s.dipoles),
    }];
    let cfg = CapacityConfig {
        snr_db: vec![0.0, 10.0],
        n_realizations: 50,
        n_rays: 30,
    };
    let a = average_capacity(&schemes, &profile, &cfg, 8).unwrap();
    let b = average_capacity(&schemes, &profile, &cfg, 8).unwrap();
    assert_eq!(a, b);
    let c = average_capacity(&schemes, &profile, &cfg, 9).unwrap();
    assert_ne!(a, c);
}

#[test]
fn channel_is_invariant_to_port_phases_in_capacity() {
    let s = common::setup(0.2, 16, 32);
    let profile = AngularProfile::Gaussian(common::scenario_profile(0.2));
    let rays = draw_rays(&profile, 50, &mut realization_rng(1, 0)).unwrap();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![Complex64::from_polar(1.0, 0.3), Complex64::from_polar(1.0, 2.2)]));
    let h1 = channel_matrix(&rays, &modal(&s, &s.dipoles), &modal(&s, &s.dipoles)).unwrap().0;
    let h2 = channel_matrix(&rays, &modal(&s, &(&s.dipoles * &d)), &modal(&s, &s.dipoles)).unwrap().0;
    assert!((capacity_bits(&h1, 10.0) - capacity_bits(&h2, 10.0)).abs() < 1e-12);
}

#[test]
fn centred_dipole_projection_residual() {
    let s = common::setup(0.2, 64, 128);
    let single = DipoleArray {
        count: 1,
        spacing: 0.0,
        orientation: Vector3::z(),
    };
    let r = dipole_projection_residual(&s.trunc, &single, 0, &s.quad).unwrap();
    assert!(r < 0.05, "{r}");
}

#[test]
fn displaced_dipoles_are_mirror_images() {
    let s = common::setup(0.2, 64, 128);
    let arr = DipoleArray {
        count: 2,
        spacing: 0.35,
        orientation: Vector3::z(),
    };
    for &(th, ph) in &[(1.2, 0.4), (0.5, 2.0)] {
        let a = arr.element_pattern(common::K, 0, th, ph).0;
        let b = arr.element_pattern(common::K, 1, th, -ph).0;
        assert!((a - b).norm() < 1e-14);
        // same magnitude, conjugate translation phase
        let b = arr.element_pattern(common::K, 1, th, ph).0;
        assert!((a.norm() - b.norm()).abs() < 1e-14);
    }
    let q = dipole_array_smcs(&s.trunc, &arr, &s.quad).unwrap();
    for c in q.column_iter() {
        assert!((c.norm() - 1.0).abs() < 1e-12);
    }
    // reflection y -> -y maps (s, m, n) onto (s, -m, n) up to a phase
    for mode in s.trunc.modes() {
        let mirror = ModeIndex::new(mode.s, -mode.m, mode.n).unwrap();
        let a = q[(mode.flatten() - 1, 0)].norm();
        let b = q[(mirror.flatten() - 1, 1)].norm();
        assert!((a - b).abs() < 1e-10, "{mode:?}: {a} vs {b}");
    }
    // the displaced elements lose more to truncation than the centred one
    let r0 = dipole_projection_residual(&s.trunc, &arr, 0, &s.quad).unwrap();
    let r1 = dipole_projection_residual(&s.trunc, &arr, 1, &s.quad).unwrap();
    assert!((r0 - r1).abs() < 1e-10);
    assert!(r0 < 0.1, "{r0}");
}

#[test]
fn multiplexing_slope() {
    let s = common::setup(0.2, 32, 64);
    let profile = AngularProfile::Gaussian(common::scenario_profile(0.2));
    let schemes = vec![
        Scheme {
            name: "2x2".into(),
            tx: modal(&s, &s.dipoles),
            rx: modal(&s, &s.dipoles),
        },
        Scheme {
            name: "1x1".into(),
            tx: modal(&s, &s.siso),
            rx: modal(&s, &s.siso),
        },
    ];
    let cfg = CapacityConfig {
        snr_db: vec![40.0, 50.0],
        n_realizations: 400,
        n_rays: 100,
    };
    let c = average_capacity(&schemes, &profile, &cfg, 2).unwrap();
    let slope = |i: usize| c[i].points[1].mean - c[i].points[0].mean;
    let ratio = slope(0) / slope(1);
    assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
}
