#![allow(dead_code)]

use std::f64::consts::PI;

use mimo_sme::capacity::{dipole_array_smcs, DipoleArray};
use mimo_sme::channel::{sphere_quadrature, AngularProfile, JointAngularProfile, Polarization, ProfileIntegrator, SphereQuadrature};
use mimo_sme::modes::{truncate, SmcMatrix, Truncation};
use mimo_sme::optimizer::SideBasis;
use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub const K: f64 = 2.0 * PI;

pub fn r0() -> f64 {
    2f64.sqrt() / 4.0
}

pub fn scenario_trunc() -> Truncation {
    truncate(K, r0()).unwrap()
}

pub fn scenario_profile(rho: f64) -> JointAngularProfile {
    let d = PI / 180.0;
    JointAngularProfile::new([90.0 * d, 0.0, 90.0 * d, 0.0], [15.0 * d, 30.0 * d, 15.0 * d, 30.0 * d], rho, Polarization::Theta).unwrap()
}

pub struct Setup {
    pub trunc: Truncation,
    pub quad: SphereQuadrature,
    pub basis: SideBasis,
    pub integ: ProfileIntegrator,
    pub dipoles: SmcMatrix,
    pub siso: SmcMatrix,
}

pub fn setup(rho: f64, n_theta: usize, n_phi: usize) -> Setup {
    let trunc = scenario_trunc();
    let quad = sphere_quadrature(n_theta, n_phi).unwrap();
    let basis = SideBasis::new(trunc, &quad).unwrap();
    let integ = ProfileIntegrator::new(AngularProfile::Gaussian(scenario_profile(rho)), quad.clone());
    let arr = |count| DipoleArray {
        count,
        spacing: 0.35,
        orientation: Vector3::z(),
    };
    let dipoles = dipole_array_smcs(&trunc, &arr(2), &quad).unwrap();
    let siso = dipole_array_smcs(&trunc, &arr(1), &quad).unwrap();
    Setup {
        trunc,
        quad,
        basis,
        integ,
        dipoles,
        siso,
    }
}

pub fn complex_gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Random matrix with unit-norm columns.
pub fn unit_columns<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Complex64> {
    let mut q = complex_gaussian(rng, rows, cols);
    for mut c in q.column_iter_mut() {
        let n = c.norm();
        c.unscale_mut(n);
    }
    q
}

/// Random PSD matrix `A Aᴴ` of the given rank.
pub fn random_psd<R: Rng>(rng: &mut R, dim: usize, rank: usize) -> DMatrix<Complex64> {
    let a = complex_gaussian(rng, dim, rank);
    &a * a.adjoint()
}

/// `∫₀^∞ log₂(1 + γx) e^{−x} dx` by Gauss–Laguerre-free substitution `x = t/(1 − t)`
/// and a composite Simpson rule on `[0, 1)`.
pub fn rayleigh_capacity(gamma: f64) -> f64 {
    let n = 200_000;
    let h = 1.0 / n as f64;
    let f = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let x = t / (1.0 - t);
        (1.0 + gamma * x).log2() * (-x).exp() / ((1.0 - t) * (1.0 - t))
    };
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    s * h / 3.0
}
