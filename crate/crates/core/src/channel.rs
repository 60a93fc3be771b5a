//! Propagation environment: the joint Gaussian angular profile, sphere
//! quadrature, directivity-weighted marginal profiles and ray-based channel
//! realizations.
//!
//! Profile densities are expressed per `dθ dφ` on each side (the raw angle
//! coordinates of the Gaussian). Sphere quadrature weights are solid-angle
//! weights, so integrals over a side use `w / sin θ` per node.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, shape, Error, Result};
use crate::modes::{FarFieldTable, SmcMatrix, Truncation};
use crate::specialfn::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Tx,
    Rx,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Tx => Side::Rx,
            Side::Rx => Side::Tx,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Tx => "tx",
            Side::Rx => "rx",
        }
    }
}

/// Polarization content of the channel response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    /// Only the θθ component of the dyadic response is present.
    Theta,
    /// Only φφ.
    Phi,
    /// All four components (θθ, θφ, φθ, φφ), mutually uncorrelated.
    Dual,
}

/// One field component, θ or φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Theta,
    Phi,
}

impl Polarization {
    pub fn components(self) -> &'static [Component] {
        match self {
            Polarization::Theta => &[Component::Theta],
            Polarization::Phi => &[Component::Phi],
            Polarization::Dual => &[Component::Theta, Component::Phi],
        }
    }
}

/// Tensor-product rule on the sphere: Gauss–Legendre in `cos θ`, uniform in `φ`.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub n_theta: usize,
    pub n_phi: usize,
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    /// Gauss weights in `cos θ`; full node weight is `theta_weights[i] * 2π / n_phi`.
    pub theta_weights: Vec<f64>,
}

pub fn sphere_quadrature(n_theta: usize, n_phi: usize) -> Result<SphereQuadrature> {
    if n_theta < 2 || n_phi < 2 {
        return Err(domain(format!("quadrature size {n_theta}x{n_phi} is degenerate")));
    }
    let (x, w) = gauss_legendre(n_theta);
    // descending cos -> ascending θ
    let thetas: Vec<f64> = x.iter().rev().map(|c| c.acos()).collect();
    let theta_weights: Vec<f64> = w.into_iter().rev().collect();
    let phis = (0..n_phi).map(|i| 2.0 * PI * i as f64 / n_phi as f64).collect();
    Ok(SphereQuadrature {
        n_theta,
        n_phi,
        thetas,
        phis,
        theta_weights,
    })
}

impl SphereQuadrature {
    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node order is θ-major: node `i * n_phi + l` sits at `(thetas[i], phis[l])`.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        self.thetas
            .iter()
            .flat_map(|&t| self.phis.iter().map(move |&p| (t, p)))
            .collect()
    }

    /// Solid-angle weights, summing to 4π.
    pub fn weights(&self) -> Vec<f64> {
        let dphi = 2.0 * PI / self.n_phi as f64;
        self.theta_weights
            .iter()
            .flat_map(|&w| std::iter::repeat_n(w * dphi, self.n_phi))
            .collect()
    }

    /// Weights for integrating a density given per `dθ dφ`.
    pub fn angle_weights(&self) -> Vec<f64> {
        let dphi = 2.0 * PI / self.n_phi as f64;
        self.theta_weights
            .iter()
            .zip(&self.thetas)
            .flat_map(|(&w, &t)| std::iter::repeat_n(w * dphi / t.sin(), self.n_phi))
            .collect()
    }

    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        self.nodes().iter().zip(self.weights()).map(|(&(t, p), w)| w * f(t, p)).sum()
    }
}

/// Joint Gaussian angular profile over `x = [θt, φt, θr, φr]` (radians).
#[derive(Debug, Clone, PartialEq)]
pub struct JointAngularProfile {
    pub mean: [f64; 4],
    /// standard deviations σ
    pub spreads: [f64; 4],
    pub rho: f64,
    pub polarization: Polarization,
    covariance: Matrix4<f64>,
    chol: Matrix4<f64>,
    precision: Matrix4<f64>,
    norm: f64,
}

impl JointAngularProfile {
    pub fn new(mean: [f64; 4], spreads: [f64; 4], rho: f64, polarization: Polarization) -> Result<Self> {
        if spreads.iter().any(|s| !(*s > 0.0)) {
            return Err(domain(format!("angular spreads {spreads:?} must be positive")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::NotPositiveDefinite(format!(
                "correlation rho = {rho} must lie in [0, 1)"
            )));
        }
        let covariance = covariance(&spreads, rho);
        let chol = covariance.cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite(format!(
                "rho = {rho}: with equal Tx/Rx cross-correlations the correlation pattern has eigenvalue 1 - 2 rho"
            ))
        })?;
        let precision = chol.inverse();
        let l = chol.l();
        let norm = 1.0 / ((2.0 * PI).powi(4)).sqrt() / (l[(0, 0)] * l[(1, 1)] * l[(2, 2)] * l[(3, 3)]);
        Ok(JointAngularProfile {
            mean,
            spreads,
            rho,
            polarization,
            covariance,
            chol: l,
            precision,
            norm,
        })
    }

    pub fn covariance(&self) -> Matrix4<f64> {
        self.covariance
    }

    /// Gaussian density at raw (unwrapped) angles.
    pub fn joint_pdf(&self, x: [f64; 4]) -> f64 {
        let d = nalgebra::Vector4::from_fn(|i, _| x[i] - self.mean[i]);
        self.norm * (-0.5 * d.dot(&(self.precision * d))).exp()
    }

    /// Draw one `[θt, φt, θr, φr]`, re-drawing until both polar angles lie in `[0, π]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 4] {
        loop {
            let z = nalgebra::Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let x = self.chol * z;
            let out = [
                self.mean[0] + x[0],
                self.mean[1] + x[1],
                self.mean[2] + x[2],
                self.mean[3] + x[3],
            ];
            if (0.0..=PI).contains(&out[0]) && (0.0..=PI).contains(&out[2]) {
                return out;
            }
        }
    }

    /// Offsets from the mean for a side's (θ, φ), with φ taken on the chart centred at the mean.
    fn offsets(&self, side: Side, theta: f64, phi: f64) -> (f64, f64) {
        let base = if side == Side::Tx { 0 } else { 2 };
        let dphi = (phi - self.mean[base + 1] + PI).rem_euclid(2.0 * PI) - PI;
        (theta - self.mean[base], dphi)
    }
}

/// `Σ = (c cᵀ) ∘ P` with zero same-side θ/φ correlation and `ρ` in every Tx↔Rx slot.
pub fn covariance(spreads: &[f64; 4], rho: f64) -> Matrix4<f64> {
    let p = Matrix4::new(
        1.0, 0.0, rho, rho, //
        0.0, 1.0, rho, rho, //
        rho, rho, 1.0, 0.0, //
        rho, rho, 0.0, 1.0,
    );
    Matrix4::from_fn(|i, j| spreads[i] * spreads[j] * p[(i, j)])
}

/// A joint angular profile: the Gaussian cluster model, or an isotropic
/// environment (uniform over solid angle on both sides, independent).
#[derive(Debug, Clone, PartialEq)]
pub enum AngularProfile {
    Gaussian(JointAngularProfile),
    Isotropic(Polarization),
}

impl AngularProfile {
    pub fn polarization(&self) -> Polarization {
        match self {
            AngularProfile::Gaussian(g) => g.polarization,
            AngularProfile::Isotropic(p) => *p,
        }
    }

    /// Density per `dθt dφt dθr dφr`.
    pub fn density(&self, x: [f64; 4]) -> f64 {
        match self {
            AngularProfile::Gaussian(g) => g.joint_pdf(x),
            AngularProfile::Isotropic(_) => x[0].sin().abs() * x[2].sin().abs() / (16.0 * PI * PI),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 4] {
        match self {
            AngularProfile::Gaussian(g) => g.sample(rng),
            AngularProfile::Isotropic(_) => {
                let mut draw = || {
                    let c: f64 = rng.random_range(-1.0..=1.0);
                    let p: f64 = rng.random_range(0.0..2.0 * PI);
                    (c.acos(), p)
                };
                let (tt, pt) = draw();
                let (tr, pr) = draw();
                [tt, pt, tr, pr]
            }
        }
    }
}

/// Antenna ports on one side of the link.
#[derive(Debug, Clone, PartialEq)]
pub enum Antenna {
    /// Ports described by SMC columns over a truncation.
    Modes { trunc: Truncation, q: SmcMatrix },
    /// A single port with unit θ-polarized response in every direction.
    Isotropic,
}

impl Antenna {
    pub fn modes(trunc: Truncation, q: SmcMatrix) -> Result<Self> {
        if q.nrows() != trunc.j_count {
            return Err(shape(format!("SMC matrix with {} rows", trunc.j_count), format!("{} rows", q.nrows())));
        }
        Ok(Antenna::Modes { trunc, q })
    }

    pub fn ports(&self) -> usize {
        match self {
            Antenna::Modes { q, .. } => q.ncols(),
            Antenna::Isotropic => 1,
        }
    }

    pub fn truncation(&self) -> Option<&Truncation> {
        match self {
            Antenna::Modes { trunc, .. } => Some(trunc),
            Antenna::Isotropic => None,
        }
    }

    /// Port responses for one field component at the directions of `table` (directions × ports).
    pub fn gains(&self, table: Option<&FarFieldTable>, rows: usize, comp: Component) -> DMatrix<Complex64> {
        match self {
            Antenna::Modes { q, .. } => {
                let t = table.expect("far-field table required for modal antenna");
                match comp {
                    Component::Theta => &t.theta * q,
                    Component::Phi => &t.phi * q,
                }
            }
            Antenna::Isotropic => match comp {
                Component::Theta => DMatrix::from_element(rows, 1, Complex64::new(1.0, 0.0)),
                Component::Phi => DMatrix::zeros(rows, 1),
            },
        }
    }

    /// `Σ_ports |g|²` restricted to the listed components, per direction.
    fn power(&self, table: Option<&FarFieldTable>, rows: usize, comps: &[Component]) -> Vec<f64> {
        let mut out = vec![0.0; rows];
        for &c in comps {
            let g = self.gains(table, rows, c);
            for (i, o) in out.iter_mut().enumerate() {
                *o += g.row(i).iter().map(|v| v.norm_sqr()).sum::<f64>();
            }
        }
        out
    }
}

/// Angular profile seen by one side after weighting the joint profile with
/// the opposite side's directivities, tabulated on the quadrature nodes
/// (density per `dθ dφ`).
#[derive(Debug, Clone)]
pub struct MarginalProfile {
    pub side: Side,
    pub polarization: Polarization,
    pub values: Vec<f64>,
}

/// Integrates profile quantities on a fixed sphere quadrature.
///
/// For Gaussian profiles the Tx↔Rx cross term of the exponent factors into
/// four small exponential tables over (θ, φ) index pairs, so the double sum
/// over node pairs needs multiplications only.
#[derive(Debug, Clone)]
pub struct ProfileIntegrator {
    pub profile: AngularProfile,
    pub quad: SphereQuadrature,
    nodes: Vec<(f64, f64)>,
    angle_weights: Vec<f64>,
    gauss: Option<GaussTables>,
}

#[derive(Debug, Clone)]
struct GaussTables {
    /// per-side node factor exp(-½ x_sᵀ A_s x_s), indexed [side][node]
    own: [Vec<f64>; 2],
    /// exp(-B11 θt θr) [i_t][i_r]
    tt: DMatrix<f64>,
    /// exp(-B12 θt φr) [i_t][l_r]
    tp: DMatrix<f64>,
    /// exp(-B21 φt θr) [l_t][i_r]
    pt: DMatrix<f64>,
    /// exp(-B22 φt φr) [l_t][l_r]
    pp: DMatrix<f64>,
    norm: f64,
}

impl ProfileIntegrator {
    pub fn new(profile: AngularProfile, quad: SphereQuadrature) -> Self {
        let nodes = quad.nodes();
        let angle_weights = quad.angle_weights();
        let gauss = match &profile {
            AngularProfile::Gaussian(g) => Some(GaussTables::new(g, &quad)),
            AngularProfile::Isotropic(_) => None,
        };
        ProfileIntegrator {
            profile,
            quad,
            nodes,
            angle_weights,
            gauss,
        }
    }

    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    /// Marginal profile at `side`, given the antenna on the opposite side.
    pub fn marginal(&self, side: Side, opposite: &Antenna, table: Option<&FarFieldTable>) -> Result<MarginalProfile> {
        let n = self.nodes.len();
        if let Some(t) = table {
            if t.theta.nrows() != n {
                return Err(shape(format!("far-field table with {n} rows"), t.theta.nrows()));
            }
        }
        let pol = self.profile.polarization();
        let power = opposite.power(table, n, pol.components());
        // weight over the opposite side's nodes
        let f: Vec<f64> = power.iter().zip(&self.angle_weights).map(|(p, w)| p * w).collect();
        let values = match &self.gauss {
            Some(g) => g.marginal(side, &f, &self.quad),
            None => {
                let total: f64 = f
                    .iter()
                    .zip(&self.nodes)
                    .map(|(v, &(t, _))| v * t.sin() / (4.0 * PI))
                    .sum();
                self.nodes.iter().map(|&(t, _)| total * t.sin() / (4.0 * PI)).collect()
            }
        };
        Ok(MarginalProfile {
            side,
            polarization: pol,
            values,
        })
    }

    /// Marginal at one arbitrary direction by direct summation over the opposite side's nodes.
    pub fn marginal_at(&self, side: Side, opposite: &Antenna, table: Option<&FarFieldTable>, theta: f64, phi: f64) -> f64 {
        let n = self.nodes.len();
        let power = opposite.power(table, n, self.profile.polarization().components());
        self.nodes
            .iter()
            .zip(power.iter().zip(&self.angle_weights))
            .map(|(&(t, p), (pw, w))| {
                let x = match side {
                    Side::Rx => self.chart_point(t, p, theta, phi),
                    Side::Tx => self.chart_point(theta, phi, t, p),
                };
                self.profile.density(x) * pw * w
            })
            .sum()
    }

    /// Angles with each φ moved onto the chart centred at the profile mean.
    fn chart_point(&self, tt: f64, pt: f64, tr: f64, pr: f64) -> [f64; 4] {
        match &self.profile {
            AngularProfile::Gaussian(g) => {
                let (a, b) = g.offsets(Side::Tx, tt, pt);
                let (c, d) = g.offsets(Side::Rx, tr, pr);
                [g.mean[0] + a, g.mean[1] + b, g.mean[2] + c, g.mean[3] + d]
            }
            AngularProfile::Isotropic(_) => [tt, pt, tr, pr],
        }
    }

    /// Total probability mass captured by the quadrature (≈ 1).
    pub fn total_mass(&self) -> f64 {
        let ones = vec![1.0; self.nodes.len()];
        let f: Vec<f64> = ones.iter().zip(&self.angle_weights).map(|(a, b)| a * b).collect();
        let m = match &self.gauss {
            Some(g) => g.marginal(Side::Rx, &f, &self.quad),
            None => self.nodes.iter().map(|&(t, _)| t.sin() / (4.0 * PI)).collect(),
        };
        m.iter().zip(&self.angle_weights).map(|(a, b)| a * b).sum()
    }
}

impl GaussTables {
    fn new(g: &JointAngularProfile, quad: &SphereQuadrature) -> Self {
        let p = g.precision;
        let offs = |side: Side| -> (Vec<f64>, Vec<f64>) {
            let th = quad.thetas.iter().map(|&t| g.offsets(side, t, 0.0).0).collect();
            let ph = quad.phis.iter().map(|&f| g.offsets(side, 0.0, f).1).collect();
            (th, ph)
        };
        let (at, bt) = offs(Side::Tx);
        let (ar, br) = offs(Side::Rx);
        let own_side = |a: &[f64], b: &[f64], o: usize| -> Vec<f64> {
            a.iter()
                .flat_map(|&x| {
                    b.iter().map(move |&y| {
                        (-0.5 * (p[(o, o)] * x * x + 2.0 * p[(o, o + 1)] * x * y + p[(o + 1, o + 1)] * y * y)).exp()
                    })
                })
                .collect()
        };
        let own = [own_side(&at, &bt, 0), own_side(&ar, &br, 2)];
        let table = |u: &[f64], v: &[f64], c: f64| DMatrix::from_fn(u.len(), v.len(), |i, j| (-c * u[i] * v[j]).exp());
        GaussTables {
            own,
            tt: table(&at, &ar, p[(0, 2)]),
            tp: table(&at, &br, p[(0, 3)]),
            pt: table(&bt, &ar, p[(1, 2)]),
            pp: table(&bt, &br, p[(1, 3)]),
            norm: g.norm,
        }
    }

    /// Integrate the joint density against per-node weights `f` of the side opposite to `side`.
    fn marginal(&self, side: Side, f: &[f64], quad: &SphereQuadrature) -> Vec<f64> {
        let (nt, np) = (quad.n_theta, quad.n_phi);
        let other = side.opposite();
        let src = &self.own[other as usize];
        let fw: Vec<f64> = f.iter().zip(src).map(|(a, b)| a * b).collect();
        let dst = &self.own[side as usize];
        let mut out = vec![0.0; nt * np];
        // Tables are stored as [tx index][rx index]; pick accessors for the summed side.
        let (tt, tp, pt, pp) = (&self.tt, &self.tp, &self.pt, &self.pp);
        let get = |m: &DMatrix<f64>, src_i: usize, dst_i: usize| -> f64 {
            if other == Side::Tx {
                m[(src_i, dst_i)]
            } else {
                m[(dst_i, src_i)]
            }
        };
        // cross term factors: (src θ, dst θ), (src θ, dst φ), (src φ, dst θ), (src φ, dst φ)
        let (m_tt, m_tp, m_pt, m_pp) = if other == Side::Tx { (tt, tp, pt, pp) } else { (tt, pt, tp, pp) };
        let mut inner = vec![0.0; nt * np];
        for id in 0..nt {
            // inner[is][ld] = Σ_ls fw[is][ls] e(ls, id) e(ls, ld)
            for is in 0..nt {
                let row = &fw[is * np..(is + 1) * np];
                for ld in 0..np {
                    let mut acc = 0.0;
                    for (ls, v) in row.iter().enumerate() {
                        acc += v * get(m_pt, ls, id) * get(m_pp, ls, ld);
                    }
                    inner[is * np + ld] = acc;
                }
            }
            for ld in 0..np {
                let mut acc = 0.0;
                for is in 0..nt {
                    acc += get(m_tt, is, id) * get(m_tp, is, ld) * inner[is * np + ld];
                }
                out[id * np + ld] = self.norm * dst[id * np + ld] * acc;
            }
        }
        out
    }
}

/// Spherical mode correlation matrix `R = ∫ P(ψ) k(ψ) kᴴ(ψ) dψ`, by quadrature.
pub(crate) fn mode_correlation_raw(
    marginal: &MarginalProfile,
    table: &FarFieldTable,
    quad: &SphereQuadrature,
) -> Result<DMatrix<Complex64>> {
    let n = quad.len();
    if marginal.values.len() != n || table.theta.nrows() != n {
        return Err(shape(
            format!("{n} quadrature nodes"),
            format!("marginal {} / table {}", marginal.values.len(), table.theta.nrows()),
        ));
    }
    let w = quad.angle_weights();
    let j = table.theta.ncols();
    let mut r = DMatrix::<Complex64>::zeros(j, j);
    for &comp in marginal.polarization.components() {
        let k = match comp {
            Component::Theta => &table.theta,
            Component::Phi => &table.phi,
        };
        let mut weighted = k.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= Complex64::from(w[i] * marginal.values[i]);
        }
        // R_ab = Σ_i v_i k_a(i) k_b(i)^*
        r += weighted.transpose() * k.conjugate();
    }
    Ok(r)
}

/// One propagation path with a single polarization pairing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub tx: (f64, f64),
    pub rx: (f64, f64),
    pub alpha: Complex64,
    pub tx_comp: Component,
    pub rx_comp: Component,
}

/// Discrete realization of the stochastic channel response.
#[derive(Debug, Clone, PartialEq)]
pub struct RayBundle {
    /// number of drawn paths
    pub count: usize,
    pub rays: Vec<Ray>,
}

/// Draw `count` paths from the profile; each polarization pairing carries an
/// independent uniform phase with gain `1/√count`.
pub fn draw_rays<R: Rng + ?Sized>(profile: &AngularProfile, count: usize, rng: &mut R) -> Result<RayBundle> {
    if count == 0 {
        return Err(domain("ray count must be at least 1"));
    }
    let comps = profile.polarization().components();
    let amp = 1.0 / (count as f64).sqrt();
    let mut rays = Vec::with_capacity(count * comps.len() * comps.len());
    for _ in 0..count {
        let x = profile.sample(rng);
        for &rx_comp in comps {
            for &tx_comp in comps {
                let phase: f64 = rng.random_range(0.0..2.0 * PI);
                rays.push(Ray {
                    tx: (x[0], x[1]),
                    rx: (x[2], x[3]),
                    alpha: Complex64::from_polar(amp, phase),
                    tx_comp,
                    rx_comp,
                });
            }
        }
    }
    Ok(RayBundle { count, rays })
}
