//! Surface-current synthesis on a square plate in the yz-plane.
//!
//! Each cell carries a y-directed and a z-directed rooftop: a sine profile
//! along its own direction, constant across the cell. Basis functions are
//! interleaved, `l′ = 2l` for the y-directed and `l′ = 2l + 1` for the
//! z-directed function of cell `l`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{domain, shape, Result};
use crate::modes::{ModeIndex, SmcMatrix, SmcVector, Truncation};
use crate::specialfn::{gauss_legendre, LegendreTable, RadialKind, RadialTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurrentComponent {
    Y,
    Z,
}

/// Square plate of side `side` centred on the origin in the yz-plane, split
/// into `cells_per_axis²` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceGrid {
    pub side: f64,
    pub cells_per_axis: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisIndex {
    pub cell: usize,
    pub component: CurrentComponent,
}

impl BasisIndex {
    pub fn flatten(self) -> usize {
        2 * self.cell + matches!(self.component, CurrentComponent::Z) as usize
    }
}

impl SurfaceGrid {
    pub fn new(side: f64, cells_per_axis: usize) -> Result<Self> {
        if !(side > 0.0) || cells_per_axis == 0 {
            return Err(domain(format!("grid needs a positive side and cell count, got {side} and {cells_per_axis}")));
        }
        Ok(SurfaceGrid { side, cells_per_axis })
    }

    pub fn cells(&self) -> usize {
        self.cells_per_axis * self.cells_per_axis
    }

    pub fn basis_count(&self) -> usize {
        2 * self.cells()
    }

    pub fn cell_width(&self) -> f64 {
        self.side / self.cells_per_axis as f64
    }

    /// Half-support of each rooftop.
    pub fn delta_u(&self) -> f64 {
        self.cell_width() / 2.0
    }

    /// `(y, z)` centre of cell `l`; cells are numbered with `z` varying fastest.
    pub fn cell_center(&self, l: usize) -> (f64, f64) {
        let n = self.cells_per_axis;
        let h = self.cell_width();
        let c = |i: usize| -self.side / 2.0 + (i as f64 + 0.5) * h;
        (c(l / n), c(l % n))
    }

    /// Largest distance from the origin of any point of the plate.
    pub fn extent(&self) -> f64 {
        self.side / 2f64.sqrt()
    }

    pub fn basis_index(&self, l_prime: usize) -> Result<BasisIndex> {
        if l_prime >= self.basis_count() {
            return Err(domain(format!("basis index {l_prime} is outside 0..{}", self.basis_count())));
        }
        let component = if l_prime % 2 == 0 { CurrentComponent::Y } else { CurrentComponent::Z };
        Ok(BasisIndex { cell: l_prime / 2, component })
    }
}

fn rooftop(k: f64, du: f64, offset: f64) -> f64 {
    let t = du - offset.abs();
    if t <= 0.0 {
        0.0
    } else {
        (k * t).sin() / (k * du).sin()
    }
}

/// Value `(b_y, b_z)` of basis function `l′` at `(y, z)` on the plate.
pub fn basis_eval(grid: &SurfaceGrid, k: f64, l_prime: usize, y: f64, z: f64) -> Result<(f64, f64)> {
    let idx = grid.basis_index(l_prime)?;
    let (yc, zc) = grid.cell_center(idx.cell);
    let du = grid.delta_u();
    let (along, across) = match idx.component {
        CurrentComponent::Y => (y - yc, z - zc),
        CurrentComponent::Z => (z - zc, y - yc),
    };
    if across.abs() > du {
        return Ok((0.0, 0.0));
    }
    let v = rooftop(k, du, along);
    Ok(match idx.component {
        CurrentComponent::Y => (v, 0.0),
        CurrentComponent::Z => (0.0, v),
    })
}

/// Diagonal of the basis Gram matrix `∫ b_{l′} · b_{l′} dS`; off-diagonal entries vanish.
pub fn basis_gram(grid: &SurfaceGrid, k: f64) -> DVector<f64> {
    let du = grid.delta_u();
    let s = (k * du).sin();
    let line = 2.0 * (du / 2.0 - (2.0 * k * du).sin() / (4.0 * k)) / (s * s);
    DVector::from_element(grid.basis_count(), line * grid.cell_width())
}

/// `Z` (J × basis count) mapping current coefficients to SMCs.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    pub z: DMatrix<Complex64>,
    pub eta: f64,
    pub k: f64,
    pub trunc: Truncation,
    pub grid: SurfaceGrid,
}

/// Per-cell quadrature order; the rooftop axis is split at its peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellQuadrature(pub usize);

impl Default for CellQuadrature {
    fn default() -> Self {
        CellQuadrature(4)
    }
}

/// `z_{jl′} = (−1)^{m+1} (k/√η) ∫ f⁽¹⁾_{s,−m,n} · b_{l′} dS`.
pub fn coupling_matrix(grid: &SurfaceGrid, trunc: &Truncation, eta: f64, order: CellQuadrature) -> Result<CouplingMatrix> {
    if !(eta > 0.0) {
        return Err(domain(format!("admittance {eta} must be positive")));
    }
    if grid.extent() > trunc.r0 * (1.0 + 1e-12) {
        return Err(domain(format!("plate reaches {} beyond the volume radius {}", grid.extent(), trunc.r0)));
    }
    if order.0 == 0 {
        return Err(domain("cell quadrature needs at least one point"));
    }
    let k = trunc.k;
    let du = grid.delta_u();
    let (gx, gw) = gauss_legendre(order.0);
    let modes: Vec<ModeIndex> = trunc.modes().collect();
    let scale = k / eta.sqrt();
    let columns: Vec<Vec<Complex64>> = (0..grid.basis_count())
        .into_par_iter()
        .map(|lp| -> Result<Vec<Complex64>> {
            let idx = grid.basis_index(lp)?;
            let (yc, zc) = grid.cell_center(idx.cell);
            let mut col = vec![Complex64::default(); modes.len()];
            for half in [-1.0, 1.0] {
                for (&xa, &wa) in gx.iter().zip(&gw) {
                    // node within [0, Δu] on one side of the peak
                    let off = half * du * (xa + 1.0) / 2.0;
                    let profile = rooftop(k, du, off) * wa * du / 2.0;
                    for (&xc, &wc) in gx.iter().zip(&gw) {
                        let cross = du * xc;
                        let w = profile * wc * du;
                        let (y, z) = match idx.component {
                            CurrentComponent::Y => (yc + off, zc + cross),
                            CurrentComponent::Z => (yc + cross, zc + off),
                        };
                        accumulate(&mut col, &modes, trunc, idx.component, y, z, w * scale)?;
                    }
                }
            }
            Ok(col)
        })
        .collect::<Result<_>>()?;
    let z = DMatrix::from_fn(modes.len(), grid.basis_count(), |j, l| columns[l][j]);
    Ok(CouplingMatrix {
        z,
        eta,
        k,
        trunc: *trunc,
        grid: *grid,
    })
}

fn accumulate(col: &mut [Complex64], modes: &[ModeIndex], trunc: &Truncation, comp: CurrentComponent, y: f64, z: f64, w: f64) -> Result<()> {
    let r = (y * y + z * z).sqrt().max(1e-12);
    let theta = (y.abs()).atan2(z);
    let phi = if y >= 0.0 { std::f64::consts::FRAC_PI_2 } else { -std::f64::consts::FRAC_PI_2 };
    let kr = trunc.k * r;
    let leg = LegendreTable::new(trunc.n_max, theta)?;
    let radial = RadialTable::new(RadialKind::Bessel, trunc.n_max, kr)?;
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    for (slot, &mode) in col.iter_mut().zip(modes) {
        let f = crate::modes::spherical_wave_flipped(mode, &leg, &radial, kr, phi);
        let proj = match comp {
            CurrentComponent::Y => f.e_r * (st * sp) + f.e_theta * (ct * sp) + f.e_phi * cp,
            CurrentComponent::Z => f.e_r * ct - f.e_theta * st,
        };
        let sign = if mode.m.rem_euclid(2) == 0 { -1.0 } else { 1.0 };
        *slot += proj * (sign * w);
    }
    Ok(())
}

/// Truncated-SVD pseudo-inverse of `Z`.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<Complex64>,
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

impl CouplingMatrix {
    /// Singular values below `svd_tol · σ_max` are discarded.
    pub fn pseudo_inverse(&self, svd_tol: f64) -> Result<PseudoInverse> {
        if !(svd_tol >= 0.0) {
            return Err(domain(format!("svd tolerance {svd_tol} must be non-negative")));
        }
        let svd = self.z.clone().svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let s_max = svd.singular_values.max();
        let mut sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
        let mut pinv = DMatrix::zeros(self.z.ncols(), self.z.nrows());
        let mut rank = 0;
        for (i, &s) in sigma.iter().enumerate() {
            if s > svd_tol * s_max && s > 0.0 {
                rank += 1;
                pinv += v_t.row(i).adjoint() * u.column(i).adjoint() / Complex64::from(s);
            }
        }
        sigma.sort_by(|a, b| b.total_cmp(a));
        Ok(PseudoInverse {
            matrix: pinv,
            rank,
            singular_values: sigma,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurrentCoefficients {
    pub a: DVector<Complex64>,
    /// `‖Z ã − q‖ / ‖q‖`
    pub residual: f64,
}

/// `ã = Z⁺ q`.
pub fn synthesize_current(z: &CouplingMatrix, q: &SmcVector, svd_tol: f64) -> Result<CurrentCoefficients> {
    let pinv = z.pseudo_inverse(svd_tol)?;
    synthesize_with(z, &pinv, q)
}

/// `ã = Z⁺ q` with a precomputed pseudo-inverse.
pub fn synthesize_with(z: &CouplingMatrix, pinv: &PseudoInverse, q: &SmcVector) -> Result<CurrentCoefficients> {
    if q.len() != z.z.nrows() {
        return Err(shape(format!("SMC vector of length {}", z.z.nrows()), q.len()));
    }
    let a = &pinv.matrix * q;
    let qn = q.norm();
    let residual = if qn > 0.0 { (&z.z * &a - q).norm() / qn } else { 0.0 };
    Ok(CurrentCoefficients { a, residual })
}

/// `q′ = Z a`.
pub fn recalc_smcs(z: &CouplingMatrix, a: &DVector<Complex64>) -> Result<SmcVector> {
    if a.len() != z.z.ncols() {
        return Err(shape(format!("{} current coefficients", z.z.ncols()), a.len()));
    }
    Ok(&z.z * a)
}

/// Realizable SMCs for every column of `q_opt`, each renormalized to unit norm,
/// together with the synthesized currents.
pub fn planar_smcs(z: &CouplingMatrix, q_opt: &SmcMatrix, svd_tol: f64) -> Result<(SmcMatrix, Vec<CurrentCoefficients>)> {
    let pinv = z.pseudo_inverse(svd_tol)?;
    let mut out = SmcMatrix::zeros(q_opt.nrows(), q_opt.ncols());
    let mut currents = Vec::with_capacity(q_opt.ncols());
    for c in 0..q_opt.ncols() {
        let cur = synthesize_with(z, &pinv, &q_opt.column(c).into_owned())?;
        let q = recalc_smcs(z, &cur.a)?;
        let n = q.norm();
        if n > 0.0 {
            out.set_column(c, &(q / Complex64::from(n)));
        }
        currents.push(cur);
    }
    Ok((out, currents))
}

/// Surface current `(J_y, J_z)` at `(y, z)`.
pub fn current_field(grid: &SurfaceGrid, k: f64, a: &DVector<Complex64>, y: f64, z: f64) -> Result<(Complex64, Complex64)> {
    if a.len() != grid.basis_count() {
        return Err(shape(format!("{} current coefficients", grid.basis_count()), a.len()));
    }
    let mut jy = Complex64::default();
    let mut jz = Complex64::default();
    for (lp, &al) in a.iter().enumerate() {
        if al == Complex64::default() {
            continue;
        }
        let (by, bz) = basis_eval(grid, k, lp, y, z)?;
        jy += al * by;
        jz += al * bz;
    }
    Ok((jy, jz))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentSample {
    pub y: f64,
    pub z: f64,
    pub jy: Complex64,
    pub jz: Complex64,
}

impl CurrentSample {
    pub fn magnitude(&self) -> f64 {
        (self.jy.norm_sqr() + self.jz.norm_sqr()).sqrt()
    }

    /// Phase of the dominant component.
    pub fn phase(&self) -> f64 {
        if self.jy.norm() >= self.jz.norm() {
            self.jy.arg()
        } else {
            self.jz.arg()
        }
    }
}

/// Current at every cell centre. Only the two basis functions of the cell are nonzero there.
pub fn current_map(grid: &SurfaceGrid, a: &DVector<Complex64>) -> Result<Vec<CurrentSample>> {
    if a.len() != grid.basis_count() {
        return Err(shape(format!("{} current coefficients", grid.basis_count()), a.len()));
    }
    Ok((0..grid.cells())
        .map(|l| {
            let (y, z) = grid.cell_center(l);
            CurrentSample {
                y,
                z,
                jy: a[2 * l],
                jz: a[2 * l + 1],
            }
        })
        .collect())
}

/// CSV with columns `y,z,abs_j,arg_j,abs_jy,arg_jy,abs_jz,arg_jz`.
pub fn write_current_csv<W: Write>(out: W, samples: &[CurrentSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["y", "z", "abs_j", "arg_j", "abs_jy", "arg_jy", "abs_jz", "arg_jz"])?;
    for s in samples {
        w.write_record(&[
            s.y.to_string(),
            s.z.to_string(),
            s.magnitude().to_string(),
            s.phase().to_string(),
            s.jy.norm().to_string(),
            s.jy.arg().to_string(),
            s.jz.norm().to_string(),
            s.jz.arg().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::truncate;
    use std::f64::consts::PI;

    const K: f64 = 2.0 * PI;

    fn grid(n: usize) -> SurfaceGrid {
        SurfaceGrid::new(0.5, n).unwrap()
    }

    #[test]
    fn rooftop_peak_and_edges() {
        let g = grid(4);
        let (yc, zc) = g.cell_center(5);
        assert_eq!(basis_eval(&g, K, 10, yc, zc).unwrap(), (1.0, 0.0));
        assert_eq!(basis_eval(&g, K, 11, yc, zc).unwrap(), (0.0, 1.0));
        let du = g.delta_u();
        assert!(basis_eval(&g, K, 10, yc + du, zc).unwrap().0.abs() < 1e-15);
        assert!(basis_eval(&g, K, 10, yc - du, zc).unwrap().0.abs() < 1e-15);
        assert_eq!(basis_eval(&g, K, 10, yc + 3.0 * du, zc).unwrap(), (0.0, 0.0));
        assert!(basis_eval(&g, K, 32, 0.0, 0.0).is_err());
    }

    #[test]
    fn cell_layout() {
        let g = grid(40);
        assert_eq!(g.cells(), 1600);
        assert!((g.delta_u() - 1.0 / 160.0).abs() < 1e-15);
        let (y, z) = g.cell_center(0);
        assert!((y + 0.25 - g.delta_u()).abs() < 1e-15 && (z + 0.25 - g.delta_u()).abs() < 1e-15);
        let b = g.basis_index(7).unwrap();
        assert_eq!(b.cell, 3);
        assert_eq!(b.component, CurrentComponent::Z);
        assert_eq!(b.flatten(), 7);
    }

    #[test]
    fn gram_matches_quadrature() {
        let g = grid(5);
        let gram = basis_gram(&g, K);
        let du = g.delta_u();
        let (x, w) = gauss_legendre(12);
        let line: f64 = 2.0 * x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| rooftop(K, du, du * (xi + 1.0) / 2.0).powi(2) * wi * du / 2.0)
            .sum::<f64>();
        assert!((gram[0] - line * g.cell_width()).abs() < 1e-9 * gram[0]);
    }

    #[test]
    fn plate_must_fit() {
        let t = truncate(K, 2f64.sqrt() / 4.0).unwrap();
        assert!(coupling_matrix(&SurfaceGrid::new(0.6, 4).unwrap(), &t, 1.0, CellQuadrature::default()).is_err());
        assert!(coupling_matrix(&grid(4), &t, 0.0, CellQuadrature::default()).is_err());
    }

    #[test]
    fn zero_current_gives_zero_smcs() {
        let t = truncate(K, 2f64.sqrt() / 4.0).unwrap();
        let z = coupling_matrix(&grid(4), &t, 1.0, CellQuadrature::default()).unwrap();
        let q = recalc_smcs(&z, &DVector::zeros(32)).unwrap();
        assert_eq!(q.norm(), 0.0);
        assert!(recalc_smcs(&z, &DVector::zeros(31)).is_err());
        assert!(synthesize_current(&z, &SmcVector::zeros(15), 1e-6).is_err());
    }
}
