//! Normalized associated Legendre functions and spherical radial functions.
//!
//! Legendre functions use the orthonormal convention
//! `P̄_n^m = sqrt((2n+1)/2 * (n-m)!/(n+m)!) * P_n^m` without the
//! Condon–Shortley phase, so that `∫_{-1}^{1} (P̄_n^m)² dx = 1`.
//!
//! Values are produced from the polynomial part `P̄_n^m / sin^m θ`, which keeps
//! `m P̄/sinθ` and `dP̄/dθ` finite at the poles without dividing by `sin θ`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{domain, Result};

/// Largest supported degree.
pub const N_MAX: usize = 20;
/// Largest supported radial argument.
pub const X_MAX: f64 = 1.0e4;

/// Radial function family `z_n^(c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RadialKind {
    /// `c = 1`, spherical Bessel `j_n`.
    Bessel,
    /// `c = 2`, spherical Neumann `n_n`.
    Neumann,
    /// `c = 3`, outgoing Hankel `h_n^(1) = j_n + i n_n`.
    HankelFirst,
    /// `c = 4`, incoming Hankel `h_n^(2) = j_n - i n_n`.
    HankelSecond,
}

impl RadialKind {
    pub fn index(self) -> u8 {
        match self {
            RadialKind::Bessel => 1,
            RadialKind::Neumann => 2,
            RadialKind::HankelFirst => 3,
            RadialKind::HankelSecond => 4,
        }
    }
}

impl TryFrom<u8> for RadialKind {
    type Error = crate::Error;

    fn try_from(c: u8) -> Result<Self> {
        match c {
            1 => Ok(RadialKind::Bessel),
            2 => Ok(RadialKind::Neumann),
            3 => Ok(RadialKind::HankelFirst),
            4 => Ok(RadialKind::HankelSecond),
            _ => Err(domain(format!("radial index c = {c} is not in 1..=4"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreEval {
    /// `P̄_n^{|m|}(cos θ)`
    pub value: f64,
    /// `d P̄_n^{|m|}(cos θ) / dθ`
    pub theta_derivative: f64,
    /// `m P̄_n^{|m|}(cos θ) / sin θ`, using the signed order.
    pub m_over_sin: f64,
}

/// Pole-safe (cos θ, sin θ); exact at θ = 0 and θ = π.
fn cos_sin(theta: f64) -> (f64, f64) {
    if theta == 0.0 {
        (1.0, 0.0)
    } else if theta == PI {
        (-1.0, 0.0)
    } else {
        (theta.cos(), theta.sin())
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_nan() || !(0.0..=PI).contains(&theta) {
        return Err(domain(format!("theta = {theta} is outside [0, pi]")));
    }
    Ok(())
}

/// All normalized Legendre functions with `n <= n_max` at one polar angle.
#[derive(Debug, Clone)]
pub struct LegendreTable {
    n_max: usize,
    cos: f64,
    sin: f64,
    /// polynomial part `P̄_n^m / sin^m` and its x-derivative, indexed `[m][n]`
    poly: Vec<Vec<(f64, f64)>>,
}

impl LegendreTable {
    pub fn new(n_max: usize, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        if n_max > N_MAX {
            return Err(domain(format!("degree {n_max} exceeds supported maximum {N_MAX}")));
        }
        let (x, s) = cos_sin(theta);
        let mut poly = Vec::with_capacity(n_max + 1);
        let mut diag = (0.5f64).sqrt();
        for m in 0..=n_max {
            if m > 0 {
                let mf = m as f64;
                diag *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt();
            }
            let mut col = vec![(0.0, 0.0); n_max + 1];
            col[m] = (diag, 0.0);
            if m < n_max {
                let c = (2.0 * m as f64 + 3.0).sqrt();
                col[m + 1] = (c * x * diag, c * diag);
            }
            let mf = m as f64;
            for n in (m + 2)..=n_max {
                let nf = n as f64;
                let den = nf * nf - mf * mf;
                let a = ((4.0 * nf * nf - 1.0) / den).sqrt();
                let b = ((2.0 * nf + 1.0) * ((nf - 1.0).powi(2) - mf * mf) / ((2.0 * nf - 3.0) * den))
                    .sqrt();
                let (q1, d1) = col[n - 1];
                let (q2, d2) = col[n - 2];
                col[n] = (a * x * q1 - b * q2, a * (q1 + x * d1) - b * d2);
            }
            poly.push(col);
        }
        Ok(LegendreTable {
            n_max,
            cos: x,
            sin: s,
            poly,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Evaluate at degree `n` and signed order `m`. Panics if out of range.
    pub fn get(&self, n: usize, m: i32) -> LegendreEval {
        let am = m.unsigned_abs() as usize;
        assert!(am <= n && n <= self.n_max, "legendre index ({n}, {m}) out of table");
        let (q, dq) = self.poly[am][n];
        let s = self.sin;
        if am == 0 {
            return LegendreEval {
                value: q,
                theta_derivative: -s * dq,
                m_over_sin: 0.0,
            };
        }
        let s_pow = s.powi(am as i32 - 1);
        LegendreEval {
            value: s_pow * s * q,
            theta_derivative: am as f64 * s_pow * self.cos * q - s_pow * s * s * dq,
            m_over_sin: m as f64 * s_pow * q,
        }
    }
}

/// Normalized associated Legendre function at `(n, m, θ)`.
pub fn legendre_eval(n: usize, m: i32, theta: f64) -> Result<LegendreEval> {
    if n == 0 || n > N_MAX {
        return Err(domain(format!("degree n = {n} is outside 1..={N_MAX}")));
    }
    if m.unsigned_abs() as usize > n {
        return Err(domain(format!("order m = {m} exceeds degree n = {n}")));
    }
    Ok(LegendreTable::new(n, theta)?.get(n, m))
}

fn check_x(x: f64) -> Result<()> {
    if x.is_nan() || x <= 0.0 {
        return Err(domain(format!("radial argument x = {x} must be positive")));
    }
    if x > X_MAX {
        return Err(domain(format!("radial argument x = {x} exceeds {X_MAX}")));
    }
    Ok(())
}

/// `j_0 ..= j_{n_max}` at `x > 0`.
fn bessel_j_seq(n_max: usize, x: f64) -> Vec<f64> {
    let (sn, cs) = x.sin_cos();
    let j0 = sn / x;
    let j1 = sn / (x * x) - cs / x;
    let mut out = vec![0.0; n_max + 1];
    out[0] = j0;
    if n_max == 0 {
        return out;
    }
    if (n_max as f64) <= x {
        out[1] = j1;
        for n in 1..n_max {
            out[n + 1] = (2.0 * n as f64 + 1.0) / x * out[n] - out[n - 1];
        }
        return out;
    }
    // Miller: downward recurrence from well above the turning point, then normalize.
    let start = n_max + x.ceil() as usize + 40;
    let mut above = 0.0;
    let mut cur = 1.0e-280;
    for k in (1..=start).rev() {
        let below = (2.0 * k as f64 + 1.0) / x * cur - above;
        above = cur;
        cur = below;
        if k - 1 <= n_max {
            out[k - 1] = cur;
        }
        if cur.abs() > 1.0e250 {
            cur *= 1.0e-250;
            above *= 1.0e-250;
            for v in out.iter_mut() {
                *v *= 1.0e-250;
            }
        }
    }
    let scale = if j0.abs() >= j1.abs() { j0 / out[0] } else { j1 / out[1] };
    for v in out.iter_mut() {
        *v *= scale;
    }
    out
}

/// `n_0 ..= n_{n_max}` at `x > 0` by upward recurrence.
fn neumann_seq(n_max: usize, x: f64) -> Vec<f64> {
    let (sn, cs) = x.sin_cos();
    let mut out = vec![0.0; n_max + 1];
    out[0] = -cs / x;
    if n_max >= 1 {
        out[1] = -cs / (x * x) - sn / x;
    }
    for n in 1..n_max {
        out[n + 1] = (2.0 * n as f64 + 1.0) / x * out[n] - out[n - 1];
    }
    out
}

/// Radial function values and `(1/x) d/dx (x z_n(x))` for every order up to `n_max`.
#[derive(Debug, Clone)]
pub struct RadialTable {
    pub values: Vec<Complex64>,
    pub kr_derivatives: Vec<Complex64>,
}

impl RadialTable {
    pub fn new(kind: RadialKind, n_max: usize, x: f64) -> Result<Self> {
        check_x(x)?;
        if n_max > N_MAX {
            return Err(domain(format!("degree {n_max} exceeds supported maximum {N_MAX}")));
        }
        let len = n_max + 2;
        let z: Vec<Complex64> = match kind {
            RadialKind::Bessel => bessel_j_seq(len - 1, x).into_iter().map(Complex64::from).collect(),
            RadialKind::Neumann => neumann_seq(len - 1, x).into_iter().map(Complex64::from).collect(),
            RadialKind::HankelFirst | RadialKind::HankelSecond => {
                let sign = if kind == RadialKind::HankelFirst { 1.0 } else { -1.0 };
                bessel_j_seq(len - 1, x)
                    .into_iter()
                    .zip(neumann_seq(len - 1, x))
                    .map(|(j, y)| Complex64::new(j, sign * y))
                    .collect()
            }
        };
        if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(domain(format!("radial function overflow at x = {x}")));
        }
        let mut kr_derivatives = Vec::with_capacity(n_max + 1);
        kr_derivatives.push(z[0] / x - z[1]);
        for n in 1..=n_max {
            kr_derivatives.push(z[n - 1] - z[n] * (n as f64 / x));
        }
        let mut values = z;
        values.truncate(n_max + 1);
        Ok(RadialTable {
            values,
            kr_derivatives,
        })
    }
}

/// `z_n^(c)(x)`.
pub fn radial_eval(kind: RadialKind, n: usize, x: f64) -> Result<Complex64> {
    Ok(RadialTable::new(kind, n, x)?.values[n])
}

/// `(1/x) d/dx (x z_n^(c)(x))`.
pub fn radial_kr_derivative(kind: RadialKind, n: usize, x: f64) -> Result<Complex64> {
    Ok(RadialTable::new(kind, n, x)?.kr_derivatives[n])
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_examples() {
        let e = legendre_eval(1, 0, PI / 2.0).unwrap();
        assert!(e.value.abs() < 1e-15);
        let e = legendre_eval(1, 0, 0.0).unwrap();
        assert!((e.value - 1.5f64.sqrt()).abs() < 1e-14);
        let e = legendre_eval(2, 2, 0.0).unwrap();
        assert_eq!(e.m_over_sin, 0.0);
    }

    #[test]
    fn legendre_closed_forms() {
        // P_2^1 = 3 x sqrt(1-x²), norm sqrt(5/2 * 1/6)
        let th = 0.7f64;
        let (x, s) = (th.cos(), th.sin());
        let e = legendre_eval(2, 1, th).unwrap();
        let c = (5.0 / 12.0f64).sqrt();
        assert!((e.value - c * 3.0 * x * s).abs() < 1e-14);
        assert!((e.m_over_sin - c * 3.0 * x).abs() < 1e-14);
        assert!((e.theta_derivative - c * 3.0 * (x * x - s * s)).abs() < 1e-14);
        let e = legendre_eval(2, -1, th).unwrap();
        assert!((e.m_over_sin + c * 3.0 * x).abs() < 1e-14);
    }

    #[test]
    fn legendre_pole_limits() {
        // m = 1: m P̄/sinθ -> polynomial part at the pole, dP̄/dθ -> same (cos θ = 1)
        let e = legendre_eval(1, 1, 0.0).unwrap();
        let c = (3.0 / 4.0f64).sqrt();
        assert!((e.m_over_sin - c).abs() < 1e-14);
        assert!((e.theta_derivative - c).abs() < 1e-14);
        let e = legendre_eval(1, 1, PI).unwrap();
        assert!((e.theta_derivative + c).abs() < 1e-14);
        for n in 1..=N_MAX {
            for m in -(n as i32)..=(n as i32) {
                for th in [0.0, PI] {
                    let e = legendre_eval(n, m, th).unwrap();
                    assert!(e.value.is_finite() && e.theta_derivative.is_finite() && e.m_over_sin.is_finite());
                }
            }
        }
    }

    #[test]
    fn legendre_domain_errors() {
        assert!(legendre_eval(0, 0, 1.0).is_err());
        assert!(legendre_eval(2, 3, 1.0).is_err());
        assert!(legendre_eval(21, 0, 1.0).is_err());
        assert!(legendre_eval(2, 1, f64::NAN).is_err());
        assert!(legendre_eval(2, 1, 4.0).is_err());
    }

    #[test]
    fn radial_examples() {
        let v = radial_eval(RadialKind::Bessel, 0, 1.0).unwrap();
        assert!((v.re - 1f64.sin()).abs() < 1e-15 && v.im == 0.0);
        let v = radial_eval(RadialKind::HankelFirst, 0, 1.0).unwrap();
        assert!((v - Complex64::new(1f64.sin(), -1f64.cos())).norm() < 1e-15);
        let v = radial_eval(RadialKind::HankelSecond, 0, 1.0).unwrap();
        assert!((v - Complex64::new(1f64.sin(), 1f64.cos())).norm() < 1e-15);
        assert!(radial_eval(RadialKind::Bessel, 1, 0.0).is_err());
        assert!(radial_eval(RadialKind::Bessel, 1, -1.0).is_err());
        assert!(RadialKind::try_from(5).is_err());
        assert_eq!(RadialKind::try_from(3).unwrap(), RadialKind::HankelFirst);
    }

    #[test]
    fn kr_derivative_closed_form() {
        // d/dx (x h0) = e^{ix}
        let v = radial_kr_derivative(RadialKind::HankelFirst, 0, 1.0).unwrap();
        assert!((v - Complex64::new(0.0, 1.0).exp()).norm() < 1e-14);
        // (1/x) d/dx (x j0) = cos(x)/x
        let x = 1e-3;
        let v = radial_kr_derivative(RadialKind::Bessel, 0, x).unwrap();
        assert!((v.re * x - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in [2usize, 3, 8, 64] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-12, "n={n} deg={deg}");
            }
        }
    }
}
