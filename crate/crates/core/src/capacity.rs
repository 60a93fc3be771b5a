//! Monte Carlo average capacity and the half-wave dipole baselines.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{draw_rays, AngularProfile, Antenna, Component, RayBundle, SphereQuadrature};
use crate::error::{domain, shape, Result};
use crate::modes::{FarFieldTable, SmcMatrix, Truncation, FAR_FIELD_NORM};

/// Channel matrix `H` (`N_r × N_t`) for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization(pub DMatrix<Complex64>);

fn port_rows(ant: &Antenna, dirs: &[(f64, f64)], comps: &[Component]) -> Result<DMatrix<Complex64>> {
    let table = match ant.truncation() {
        Some(t) => Some(FarFieldTable::new(t, dirs)?),
        None => None,
    };
    let th = ant.gains(table.as_ref(), dirs.len(), Component::Theta);
    let ph = ant.gains(table.as_ref(), dirs.len(), Component::Phi);
    Ok(DMatrix::from_fn(dirs.len(), ant.ports(), |i, p| match comps[i] {
        Component::Theta => th[(i, p)],
        Component::Phi => ph[(i, p)],
    }))
}

/// `H = Σ_p α_p g_r(ψ_r,p) g_tᵀ(ψ_t,p)` over the polarization pairing of each ray.
pub fn channel_matrix(rays: &RayBundle, tx: &Antenna, rx: &Antenna) -> Result<ChannelRealization> {
    let tx_dirs: Vec<_> = rays.rays.iter().map(|r| r.tx).collect();
    let rx_dirs: Vec<_> = rays.rays.iter().map(|r| r.rx).collect();
    let tx_comp: Vec<_> = rays.rays.iter().map(|r| r.tx_comp).collect();
    let rx_comp: Vec<_> = rays.rays.iter().map(|r| r.rx_comp).collect();
    let gt = port_rows(tx, &tx_dirs, &tx_comp)?;
    let gr = port_rows(rx, &rx_dirs, &rx_comp)?;
    let mut weighted = gt;
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= rays.rays[i].alpha;
    }
    Ok(ChannelRealization(gr.transpose() * weighted))
}

/// `log₂ det(I + γ H Hᴴ)`.
pub fn capacity_bits(h: &DMatrix<Complex64>, gamma: f64) -> f64 {
    let n = h.nrows();
    let m = DMatrix::<Complex64>::identity(n, n) + h * h.adjoint() * Complex64::from(gamma);
    match m.clone().cholesky() {
        Some(ch) => 2.0 * ch.l().diagonal().iter().map(|d| d.re.ln()).sum::<f64>() / std::f64::consts::LN_2,
        None => m.determinant().re.log2(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityConfig {
    pub snr_db: Vec<f64>,
    pub n_realizations: usize,
    pub n_rays: usize,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        CapacityConfig {
            snr_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            n_realizations: 2000,
            n_rays: 200,
        }
    }
}

/// A Tx/Rx antenna pair evaluated under the same channel draws.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub name: String,
    pub tx: Antenna,
    pub rx: Antenna,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityPoint {
    pub snr_db: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityCurve {
    pub scheme: String,
    pub points: Vec<CapacityPoint>,
}

impl CapacityCurve {
    pub fn at(&self, snr_db: f64) -> Option<&CapacityPoint> {
        self.points.iter().find(|p| (p.snr_db - snr_db).abs() < 1e-9)
    }
}

/// Per-realization generator: the seed selects the experiment, the stream the realization.
pub fn realization_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Average capacity of every scheme; all schemes see identical ray draws.
///
/// `γ₀ = SNR / N_min` so that the total transmit power is split equally over
/// the streams.
pub fn average_capacity(schemes: &[Scheme], profile: &AngularProfile, cfg: &CapacityConfig, seed: u64) -> Result<Vec<CapacityCurve>> {
    if cfg.n_realizations == 0 {
        return Err(domain("at least one realization is required"));
    }
    let gammas: Vec<Vec<f64>> = schemes
        .iter()
        .map(|s| {
            let n_min = s.tx.ports().min(s.rx.ports()) as f64;
            cfg.snr_db.iter().map(|d| 10f64.powf(d / 10.0) / n_min).collect()
        })
        .collect();
    let per_real: Vec<Vec<Vec<f64>>> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|i| -> Result<Vec<Vec<f64>>> {
            let mut rng = realization_rng(seed, i);
            let rays = draw_rays(profile, cfg.n_rays, &mut rng)?;
            schemes
                .iter()
                .zip(&gammas)
                .map(|(s, g)| {
                    let h = channel_matrix(&rays, &s.tx, &s.rx)?.0;
                    Ok(g.iter().map(|&gamma| capacity_bits(&h, gamma)).collect())
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = cfg.n_realizations as f64;
    Ok(schemes
        .iter()
        .enumerate()
        .map(|(si, s)| CapacityCurve {
            scheme: s.name.clone(),
            points: cfg
                .snr_db
                .iter()
                .enumerate()
                .map(|(k, &snr_db)| {
                    let vals = per_real.iter().map(|r| r[si][k]);
                    let mean = vals.clone().sum::<f64>() / n;
                    let var = if n > 1.0 {
                        vals.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
                    } else {
                        0.0
                    };
                    CapacityPoint {
                        snr_db,
                        mean,
                        stderr: (var / n).sqrt(),
                    }
                })
                .collect(),
        })
        .collect())
}

/// Monte Carlo estimate of `E[H Hᴴ]`.
pub fn mean_hh(tx: &Antenna, rx: &Antenna, profile: &AngularProfile, n_rays: usize, n_realizations: usize, seed: u64) -> Result<DMatrix<Complex64>> {
    let sum = (0..n_realizations)
        .into_par_iter()
        .map(|i| -> Result<DMatrix<Complex64>> {
            let mut rng = realization_rng(seed, i);
            let rays = draw_rays(profile, n_rays, &mut rng)?;
            let h = channel_matrix(&rays, tx, rx)?.0;
            Ok(&h * h.adjoint())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(DMatrix::zeros(rx.ports(), rx.ports()), |a, b| a + b);
    Ok(sum / Complex64::from(n_realizations as f64))
}

/// Half-wave dipole elements placed along the y axis, centred on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct DipoleArray {
    pub count: usize,
    /// element spacing in the same length unit as `1/k`
    pub spacing: f64,
    /// unit vector along each dipole
    pub orientation: Vector3<f64>,
}

impl DipoleArray {
    pub fn positions(&self) -> Vec<Vector3<f64>> {
        let mid = (self.count as f64 - 1.0) / 2.0;
        (0..self.count)
            .map(|i| Vector3::new(0.0, (i as f64 - mid) * self.spacing, 0.0))
            .collect()
    }

    /// Far field `(E_θ, E_φ)` of element `idx` at one direction.
    pub fn element_pattern(&self, k: f64, idx: usize, theta: f64, phi: f64) -> (Complex64, Complex64) {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let r_hat = Vector3::new(st * cp, st * sp, ct);
        let th_hat = Vector3::new(ct * cp, ct * sp, -st);
        let ph_hat = Vector3::new(-sp, cp, 0.0);
        let d = self.orientation.normalize();
        let cos_psi = d.dot(&r_hat);
        let sin2 = 1.0 - cos_psi * cos_psi;
        let amp = if sin2 < 1e-24 { 0.0 } else { -(PI / 2.0 * cos_psi).cos() / sin2 };
        let phase = Complex64::from_polar(1.0, -k * r_hat.dot(&self.positions()[idx]));
        (phase * (amp * d.dot(&th_hat)), phase * (amp * d.dot(&ph_hat)))
    }
}

/// SMCs of a half-wave dipole array: each element's analytic far field is
/// projected onto the far-field pattern functions by sphere quadrature,
/// `q_j = ⟨g, k_j⟩ / 4π`, and every column is scaled to unit norm.
pub fn dipole_array_smcs(trunc: &Truncation, array: &DipoleArray, quad: &SphereQuadrature) -> Result<SmcMatrix> {
    if array.count == 0 {
        return Err(domain("dipole array needs at least one element"));
    }
    let half_len = PI / (2.0 * trunc.k);
    let d = array.orientation.normalize();
    for p in array.positions() {
        let reach = (p + d * half_len).norm().max((p - d * half_len).norm());
        if reach > trunc.r0 * (1.0 + 1e-12) {
            return Err(domain(format!(
                "dipole array extends to {reach}, beyond the antenna volume radius {}",
                trunc.r0
            )));
        }
    }
    let nodes = quad.nodes();
    let weights = quad.weights();
    let table = FarFieldTable::new(trunc, &nodes)?;
    let mut q = SmcMatrix::zeros(trunc.j_count, array.count);
    for e in 0..array.count {
        let (gt, gp): (Vec<_>, Vec<_>) = nodes
            .iter()
            .zip(&weights)
            .map(|(&(t, p), &w)| {
                let (a, b) = array.element_pattern(trunc.k, e, t, p);
                (a * w, b * w)
            })
            .unzip();
        for j in 0..trunc.j_count {
            let mut acc = Complex64::default();
            for i in 0..nodes.len() {
                acc += gt[i] * table.theta[(i, j)].conj() + gp[i] * table.phi[(i, j)].conj();
            }
            q[(j, e)] = acc / FAR_FIELD_NORM;
        }
        let norm = q.column(e).norm();
        q.column_mut(e).unscale_mut(norm);
    }
    Ok(q)
}

/// `‖g − Σ q_j k_j‖ / ‖g‖` over the sphere for one array element, with `q` the
/// unnormalized projection.
pub fn dipole_projection_residual(trunc: &Truncation, array: &DipoleArray, element: usize, quad: &SphereQuadrature) -> Result<f64> {
    let q = dipole_array_smcs(trunc, array, quad)?;
    let nodes = quad.nodes();
    let weights = quad.weights();
    let table = FarFieldTable::new(trunc, &nodes)?;
    let col = q.column(element);
    // recover the projection scale: ⟨g, ĝ⟩ / ‖ĝ‖² with ĝ the unit-norm fit
    let mut g_norm = 0.0;
    let mut cross = Complex64::default();
    let mut fit_norm = 0.0;
    let mut fits = Vec::with_capacity(nodes.len());
    for (i, &(t, p)) in nodes.iter().enumerate() {
        let (a, b) = array.element_pattern(trunc.k, element, t, p);
        let ft = (table.theta.row(i) * col)[0];
        let fp = (table.phi.row(i) * col)[0];
        g_norm += weights[i] * (a.norm_sqr() + b.norm_sqr());
        cross += weights[i] * (a * ft.conj() + b * fp.conj());
        fit_norm += weights[i] * (ft.norm_sqr() + fp.norm_sqr());
        fits.push((a, b, ft, fp));
    }
    let scale = cross / fit_norm;
    let resid: f64 = fits
        .iter()
        .zip(&weights)
        .map(|(&(a, b, ft, fp), w)| w * ((a - scale * ft).norm_sqr() + (b - scale * fp).norm_sqr()))
        .sum();
    Ok((resid / g_norm).sqrt())
}

/// Checks that an SMC matrix and a truncation agree.
pub fn check_smcs(trunc: &Truncation, q: &SmcMatrix) -> Result<()> {
    if q.nrows() != trunc.j_count {
        return Err(shape(format!("{} rows", trunc.j_count), q.nrows()));
    }
    Ok(())
}
