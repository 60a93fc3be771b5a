//! Vector spherical wave functions, far-field pattern functions and the
//! single-index mode ordering `j = 2(n² + n − 1 + m) + s`.
//!
//! With the orthonormal Legendre convention every far-field pattern function
//! has `∮ |k_j|² dΩ = 4π` (see [`FAR_FIELD_NORM`]), and distinct modes are
//! orthogonal over the sphere.

use std::f64::consts::PI;
use std::ops::{Add, Mul};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{domain, shape, Error, Result};
use crate::specialfn::{LegendreTable, RadialKind, RadialTable, N_MAX};

/// SMC vector `q` (length J).
pub type SmcVector = DVector<Complex64>;
/// SMC matrix `Q` (J × ports), one column per antenna port.
pub type SmcMatrix = DMatrix<Complex64>;

/// Diagonal of the far-field Gram matrix, `∮ k_j · k_j^* dΩ`.
pub const FAR_FIELD_NORM: f64 = 4.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeIndex {
    /// 1 = TE, 2 = TM
    pub s: u8,
    pub m: i32,
    pub n: usize,
}

impl ModeIndex {
    pub fn new(s: u8, m: i32, n: usize) -> Result<Self> {
        if !(1..=2).contains(&s) {
            return Err(domain(format!("polarization index s = {s} must be 1 or 2")));
        }
        if n == 0 || n > N_MAX {
            return Err(domain(format!("degree n = {n} is outside 1..={N_MAX}")));
        }
        if m.unsigned_abs() as usize > n {
            return Err(domain(format!("order m = {m} exceeds degree n = {n}")));
        }
        Ok(ModeIndex { s, m, n })
    }

    /// One-based flat index.
    pub fn flatten(self) -> usize {
        let n = self.n as i64;
        (2 * (n * n + n - 1 + self.m as i64) + self.s as i64) as usize
    }

    pub fn unflatten(j: usize) -> Result<Self> {
        if j == 0 {
            return Err(domain("mode index j must be >= 1"));
        }
        // smallest j of degree n is 2n² − 1
        let mut n = 1usize;
        while 2 * (n + 1) * (n + 1) - 1 <= j {
            n += 1;
        }
        if n > N_MAX {
            return Err(domain(format!("mode index j = {j} needs degree above {N_MAX}")));
        }
        let rem = j as i64 - 2 * (n * n + n - 1) as i64 + 2 * n as i64;
        // rem = 2(m + n) + s with s in {1, 2}
        let s = ((rem - 1) % 2 + 1) as u8;
        let m = ((rem - s as i64) / 2) as i32 - n as i32;
        ModeIndex::new(s, m, n)
    }

    /// `(−m/|m|)^m`, taken as 1 for `m = 0`.
    fn sign_factor(self) -> f64 {
        if self.m > 0 && self.m % 2 == 1 {
            -1.0
        } else {
            1.0
        }
    }
}

/// Mode count supported by a spherical volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub k: f64,
    pub r0: f64,
    pub n_max: usize,
    pub j_count: usize,
}

/// `N = ⌊k r0⌋`, `J = 2N(N + 2)`.
pub fn truncate(k: f64, r0: f64) -> Result<Truncation> {
    if !(k > 0.0) || !(r0 > 0.0) {
        return Err(domain(format!("wavenumber {k} and radius {r0} must be positive")));
    }
    let kr0 = k * r0;
    if kr0 < 1.0 {
        return Err(Error::VolumeTooSmall(kr0));
    }
    let n_max = kr0.floor() as usize;
    if n_max > N_MAX {
        return Err(domain(format!("k*r0 = {kr0} needs degree above {N_MAX}")));
    }
    Ok(Truncation {
        k,
        r0,
        n_max,
        j_count: 2 * n_max * (n_max + 2),
    })
}

impl Truncation {
    pub fn modes(&self) -> impl Iterator<Item = ModeIndex> {
        (1..=self.j_count).map(|j| ModeIndex::unflatten(j).expect("j within truncation"))
    }

    fn check_j(&self, j: usize) -> Result<ModeIndex> {
        if j == 0 || j > self.j_count {
            return Err(domain(format!("mode index j = {j} is outside 1..={}", self.j_count)));
        }
        ModeIndex::unflatten(j)
    }
}

/// Complex field amplitudes along (r̂, θ̂, φ̂).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldVector {
    pub e_r: Complex64,
    pub e_theta: Complex64,
    pub e_phi: Complex64,
}

impl FieldVector {
    pub const ZERO: FieldVector = FieldVector {
        e_r: Complex64::new(0.0, 0.0),
        e_theta: Complex64::new(0.0, 0.0),
        e_phi: Complex64::new(0.0, 0.0),
    };

    pub fn norm_sqr(&self) -> f64 {
        self.e_r.norm_sqr() + self.e_theta.norm_sqr() + self.e_phi.norm_sqr()
    }

    /// Hermitian inner product `a · b^*`.
    pub fn inner(&self, other: &FieldVector) -> Complex64 {
        self.e_r * other.e_r.conj() + self.e_theta * other.e_theta.conj() + self.e_phi * other.e_phi.conj()
    }
}

impl Add for FieldVector {
    type Output = FieldVector;
    fn add(self, o: FieldVector) -> FieldVector {
        FieldVector {
            e_r: self.e_r + o.e_r,
            e_theta: self.e_theta + o.e_theta,
            e_phi: self.e_phi + o.e_phi,
        }
    }
}

impl Mul<FieldVector> for Complex64 {
    type Output = FieldVector;
    fn mul(self, f: FieldVector) -> FieldVector {
        FieldVector {
            e_r: self * f.e_r,
            e_theta: self * f.e_theta,
            e_phi: self * f.e_phi,
        }
    }
}

const I: Complex64 = Complex64::new(0.0, 1.0);

fn minus_i_pow(p: usize) -> Complex64 {
    match p % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

fn far_field_from(mode: ModeIndex, leg: &LegendreTable, phi: f64) -> FieldVector {
    let ModeIndex { s, m, n } = mode;
    let p = leg.get(n, m);
    let nf = n as f64;
    let c = (2.0 / (nf * (nf + 1.0))).sqrt() * mode.sign_factor();
    let azim = Complex64::from_polar(c, m as f64 * phi);
    let ims = I * p.m_over_sin;
    let dp = Complex64::from(p.theta_derivative);
    if s == 1 {
        let a = azim * minus_i_pow(n + 1);
        FieldVector {
            e_r: Complex64::default(),
            e_theta: a * ims,
            e_phi: -a * dp,
        }
    } else {
        let a = azim * minus_i_pow(n);
        FieldVector {
            e_r: Complex64::default(),
            e_theta: a * dp,
            e_phi: a * ims,
        }
    }
}

/// Far-field pattern function `k_j(θ, φ)`.
pub fn far_field_pattern(trunc: &Truncation, j: usize, theta: f64, phi: f64) -> Result<FieldVector> {
    let mode = trunc.check_j(j)?;
    let leg = LegendreTable::new(mode.n, theta)?;
    Ok(far_field_from(mode, &leg, phi))
}

/// All `J` far-field pattern functions at one direction, ascending `j`.
pub fn far_field_all(trunc: &Truncation, theta: f64, phi: f64) -> Result<Vec<FieldVector>> {
    let leg = LegendreTable::new(trunc.n_max, theta)?;
    Ok(trunc.modes().map(|mode| far_field_from(mode, &leg, phi)).collect())
}

/// Far-field pattern functions tabulated over a set of directions.
///
/// Row `i` holds the θ (resp. φ) components of all `J` modes at direction `i`.
#[derive(Debug, Clone)]
pub struct FarFieldTable {
    pub theta: DMatrix<Complex64>,
    pub phi: DMatrix<Complex64>,
}

impl FarFieldTable {
    pub fn new(trunc: &Truncation, directions: &[(f64, f64)]) -> Result<Self> {
        let rows = directions.len();
        let mut theta = DMatrix::zeros(rows, trunc.j_count);
        let mut phi = DMatrix::zeros(rows, trunc.j_count);
        for (i, &(th, ph)) in directions.iter().enumerate() {
            for (j, f) in far_field_all(trunc, th, ph)?.into_iter().enumerate() {
                theta[(i, j)] = f.e_theta;
                phi[(i, j)] = f.e_phi;
            }
        }
        Ok(FarFieldTable { theta, phi })
    }
}

fn spherical_wave_from(
    mode: ModeIndex,
    leg: &LegendreTable,
    radial: &RadialTable,
    kr: f64,
    phi: f64,
) -> FieldVector {
    let ModeIndex { s, m, n } = mode;
    let p = leg.get(n, m);
    let nf = n as f64;
    let c = 1.0 / (2.0 * PI).sqrt() / (nf * (nf + 1.0)).sqrt() * mode.sign_factor();
    let azim = Complex64::from_polar(c, m as f64 * phi);
    let ims = I * p.m_over_sin;
    let z = radial.values[n];
    if s == 1 {
        FieldVector {
            e_r: Complex64::default(),
            e_theta: azim * z * ims,
            e_phi: -azim * z * p.theta_derivative,
        }
    } else {
        let d = radial.kr_derivatives[n];
        FieldVector {
            e_r: azim * z * (nf * (nf + 1.0) / kr * p.value),
            e_theta: azim * d * p.theta_derivative,
            e_phi: azim * d * ims,
        }
    }
}

/// Spherical wave function `f_j^(c)(r, θ, φ)`.
pub fn spherical_wave(kind: RadialKind, trunc: &Truncation, j: usize, k: f64, r: f64, theta: f64, phi: f64) -> Result<FieldVector> {
    let mode = trunc.check_j(j)?;
    if !(r > 0.0) {
        return Err(domain(format!("radius r = {r} must be positive")));
    }
    let kr = k * r;
    let leg = LegendreTable::new(mode.n, theta)?;
    let radial = RadialTable::new(kind, mode.n, kr)?;
    Ok(spherical_wave_from(mode, &leg, &radial, kr, phi))
}

/// All spherical wave functions with degree `<= n_max` at one point, ascending `j`.
pub fn spherical_wave_all(kind: RadialKind, n_max: usize, kr: f64, theta: f64, phi: f64) -> Result<Vec<FieldVector>> {
    let leg = LegendreTable::new(n_max, theta)?;
    let radial = RadialTable::new(kind, n_max, kr)?;
    let count = 2 * n_max * (n_max + 2);
    Ok((1..=count)
        .map(|j| {
            let mode = ModeIndex::unflatten(j).expect("j within degree range");
            spherical_wave_from(mode, &leg, &radial, kr, phi)
        })
        .collect())
}

/// Spherical wave with the azimuthal order negated, as used by the current coupling integral.
pub(crate) fn spherical_wave_flipped(mode: ModeIndex, leg: &LegendreTable, radial: &RadialTable, kr: f64, phi: f64) -> FieldVector {
    let flipped = ModeIndex { m: -mode.m, ..mode };
    spherical_wave_from(flipped, leg, radial, kr, phi)
}

/// Directivity `g(θ, φ) = Σ_j q_j k_j(θ, φ)`.
pub fn directivity(trunc: &Truncation, q: &SmcVector, theta: f64, phi: f64) -> Result<FieldVector> {
    if q.len() != trunc.j_count {
        return Err(shape(format!("SMC vector of length {}", trunc.j_count), q.len()));
    }
    let ks = far_field_all(trunc, theta, phi)?;
    Ok(ks.into_iter().zip(q.iter()).fold(FieldVector::ZERO, |acc, (k, &qj)| acc + qj * k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trunc(n: usize) -> Truncation {
        truncate(n as f64, 1.0).unwrap()
    }

    #[test]
    fn flatten_examples() {
        assert_eq!(ModeIndex::new(1, -1, 1).unwrap().flatten(), 1);
        for n in 1..=5usize {
            assert_eq!(ModeIndex::new(2, n as i32, n).unwrap().flatten(), 2 * n * (n + 2));
        }
        assert_eq!(ModeIndex::unflatten(16).unwrap(), ModeIndex { s: 2, m: 2, n: 2 });
        assert!(ModeIndex::unflatten(0).is_err());
        assert!(ModeIndex::new(3, 0, 1).is_err());
        assert!(ModeIndex::new(1, 2, 1).is_err());
        assert!(ModeIndex::new(1, 0, 0).is_err());
    }

    #[test]
    fn flatten_matches_enumeration() {
        // enumerate in (n, m, s) order; this is ascending j
        let mut j = 0;
        for n in 1..=N_MAX {
            for m in -(n as i32)..=(n as i32) {
                for s in 1..=2u8 {
                    j += 1;
                    let idx = ModeIndex { s, m, n };
                    assert_eq!(idx.flatten(), j);
                    assert_eq!(ModeIndex::unflatten(j).unwrap(), idx);
                }
            }
        }
    }

    #[test]
    fn truncation_examples() {
        let lambda = 1.0;
        let k = 2.0 * PI / lambda;
        let t = truncate(k, 2f64.sqrt() * lambda / 4.0).unwrap();
        assert_eq!((t.n_max, t.j_count), (2, 16));
        let t = truncate(1.0, 1.0).unwrap();
        assert_eq!((t.n_max, t.j_count), (1, 6));
        let t = truncate(3.999, 1.0).unwrap();
        assert_eq!((t.n_max, t.j_count), (3, 30));
        assert!(matches!(truncate(0.5, 1.0), Err(Error::VolumeTooSmall(_))));
    }

    #[test]
    fn te_m0_has_no_theta_component() {
        let t = trunc(2);
        let j = ModeIndex::new(1, 0, 1).unwrap().flatten();
        for phi in [0.0, 1.0, 4.0] {
            let f = far_field_pattern(&t, j, 0.8, phi).unwrap();
            assert_eq!(f.e_theta, Complex64::default());
            let dp = crate::specialfn::legendre_eval(1, 0, 0.8).unwrap().theta_derivative;
            assert!((f.e_phi.norm() - dp.abs()).abs() < 1e-14);
        }
        assert!(far_field_pattern(&t, 17, 0.3, 0.0).is_err());
    }

    #[test]
    fn equator_is_covered() {
        let t = trunc(2);
        for i in 0..16 {
            let phi = 2.0 * PI * i as f64 / 16.0;
            let ks = far_field_all(&t, PI / 2.0, phi).unwrap();
            assert!(ks.iter().any(|k| k.norm_sqr() > 0.1));
            assert!(ks.iter().all(|k| k.e_r == Complex64::default()));
        }
    }

    #[test]
    fn te_waves_have_no_radial_part() {
        let t = trunc(3);
        for j in (1..=t.j_count).step_by(2) {
            for kind in [RadialKind::Bessel, RadialKind::HankelFirst] {
                let f = spherical_wave(kind, &t, j, 2.0, 0.7, 1.1, 0.4).unwrap();
                assert_eq!(f.e_r, Complex64::default());
            }
        }
        assert!(spherical_wave(RadialKind::Bessel, &t, 1, 1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn directivity_basics() {
        let t = trunc(2);
        let zero = SmcVector::zeros(16);
        assert_eq!(directivity(&t, &zero, 0.4, 0.2).unwrap(), FieldVector::ZERO);
        for j in 1..=16 {
            let mut q = SmcVector::zeros(16);
            q[j - 1] = Complex64::new(1.0, 0.0);
            let g = directivity(&t, &q, 0.4, 0.2).unwrap();
            let k = far_field_pattern(&t, j, 0.4, 0.2).unwrap();
            assert!((g.inner(&g).re - k.norm_sqr()).abs() < 1e-14);
            assert!((g.e_theta - k.e_theta).norm() < 1e-15);
        }
        assert!(directivity(&t, &SmcVector::zeros(6), 0.4, 0.2).is_err());
    }
}
