//! Capacity-optimal SMCs.
//!
//! The port-level channel correlation is the quadratic form `R̄ = Qᵀ R Q*` in
//! the SMC matrix. Over unit-norm columns its determinant is bounded by the
//! product of the diagonal (Hadamard), and the bound is met by the conjugated
//! leading eigenvectors of the mode correlation matrix `R`, giving
//! `det R̄ = λ₁ ⋯ λ_N`. With both link ends free, the two eigenproblems are
//! solved alternately until the determinant settles.

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{mode_correlation_raw, Antenna, MarginalProfile, ProfileIntegrator, Side, SphereQuadrature};
use crate::error::{domain, shape, Error, Result};
use crate::modes::{FarFieldTable, SmcMatrix, Truncation};

/// Hermitian positive semi-definite `J × J` spherical mode correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCorrelationMatrix(DMatrix<Complex64>);

impl ModeCorrelationMatrix {
    /// Wraps a matrix after checking it is square and Hermitian; the stored
    /// value is the exact Hermitian part.
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() {
            return Err(shape("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let scale = m.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let asym = (&m - m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if asym > 1e-9 * scale {
            return Err(domain(format!("matrix is not Hermitian (relative asymmetry {})", asym / scale)));
        }
        Ok(ModeCorrelationMatrix((&m + m.adjoint()) * Complex64::from(0.5)))
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Eigen-decomposition with descending eigenvalues. Each eigenvector is
    /// rotated so that its largest-magnitude entry is real and positive.
    pub fn eigen(&self) -> EigenSolution {
        let eig = self.0.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = DMatrix::zeros(self.dim(), self.dim());
        for (dst, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src).into_owned();
            let pivot = col.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
            if pivot.norm() > 0.0 {
                col *= pivot.conj() / pivot.norm();
            }
            vectors.set_column(dst, &col);
        }
        EigenSolution { values, vectors }
    }
}

#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// descending
    pub values: Vec<f64>,
    /// unitary, columns ordered as `values`
    pub vectors: DMatrix<Complex64>,
}

/// Tabulated far-field functions for one side on the integrator's nodes.
#[derive(Debug, Clone)]
pub struct SideBasis {
    pub trunc: Truncation,
    pub table: FarFieldTable,
}

impl SideBasis {
    pub fn new(trunc: Truncation, quad: &SphereQuadrature) -> Result<Self> {
        let table = FarFieldTable::new(&trunc, &quad.nodes())?;
        Ok(SideBasis { trunc, table })
    }
}

/// `R = ∮ P(ψ) k(ψ) kᴴ(ψ) dψ` for the polarization components of the profile.
pub fn mode_correlation(marginal: &MarginalProfile, basis: &SideBasis, quad: &SphereQuadrature) -> Result<ModeCorrelationMatrix> {
    if marginal.values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(domain("marginal profile must be finite and non-negative"));
    }
    ModeCorrelationMatrix::new(mode_correlation_raw(marginal, &basis.table, quad)?)
}

/// `Q_opt = [u₁*, …, u_n*]` from the `n_ant` leading eigenvectors.
pub fn optimal_smcs(r: &ModeCorrelationMatrix, n_ant: usize) -> Result<SmcMatrix> {
    if n_ant == 0 || n_ant > r.dim() {
        return Err(domain(format!("antenna count {n_ant} must be in 1..={}", r.dim())));
    }
    let eig = r.eigen();
    Ok(eig.vectors.columns(0, n_ant).map(|v| v.conj()))
}

/// `R̄ = Qᵀ R Q*`.
pub fn channel_correlation(q: &SmcMatrix, r: &ModeCorrelationMatrix) -> Result<DMatrix<Complex64>> {
    if q.nrows() != r.dim() {
        return Err(shape(format!("SMC matrix with {} rows", r.dim()), q.nrows()));
    }
    let c = q.transpose() * r.matrix() * q.conjugate();
    Ok((&c + c.adjoint()) * Complex64::from(0.5))
}

/// Determinant of a Hermitian matrix (real part).
pub fn hermitian_det(m: &DMatrix<Complex64>) -> f64 {
    m.clone().determinant().re
}

/// Which half-step produced a trace entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSide {
    /// initial antennas on both ends
    Init,
    Rx,
    Tx,
}

impl fmt::Display for TraceSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceSide::Init => "init",
            TraceSide::Rx => "rx",
            TraceSide::Tx => "tx",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub side: TraceSide,
    /// `det R̄_c` of the side just optimized
    pub det: f64,
    /// `det` relative to the initial antennas, in dB
    pub det_db: f64,
    /// `log₂ det R̄_c`
    pub capacity_proxy: f64,
}

/// Stopping rule: stop once `|Δ_itr| < max(fraction · |Δ_{itr−1}|, floor)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonRule {
    pub fraction: f64,
    pub floor: f64,
    pub max_iter: usize,
}

impl Default for EpsilonRule {
    fn default() -> Self {
        EpsilonRule {
            fraction: 0.01,
            floor: 1e-12,
            max_iter: 50,
        }
    }
}

impl fmt::Display for EpsilonRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "|det(itr) - det(itr-1)| < max({} * |det(itr-1) - det(itr-2)|, {:e}), at most {} sides",
            self.fraction, self.floor, self.max_iter
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialTrace {
    pub iterations: Vec<TraceEntry>,
    pub converged: bool,
    pub epsilon_rule: String,
    pub n_modes: usize,
}

impl SequentialTrace {
    pub fn final_det_db(&self) -> f64 {
        self.iterations.last().map(|e| e.det_db).unwrap_or(0.0)
    }

    /// Trace rows for a CSV with header [`TRACE_CSV_HEADER`].
    pub fn write_csv<W: Write>(&self, out: &mut csv::Writer<W>, rho: f64) -> Result<()> {
        for e in &self.iterations {
            out.write_record(&[
                rho.to_string(),
                e.iter.to_string(),
                e.side.to_string(),
                e.det.to_string(),
                e.det_db.to_string(),
                self.n_modes.to_string(),
            ])?;
        }
        Ok(())
    }
}

pub const TRACE_CSV_HEADER: [&str; 6] = ["rho", "iter", "side", "det", "det_db", "n_modes"];

/// Result of the alternating Tx/Rx optimization.
#[derive(Debug, Clone)]
pub struct SequentialResult {
    pub q_t: SmcMatrix,
    pub q_r: SmcMatrix,
    /// mode correlation at Rx given the final Tx SMCs
    pub r_r: ModeCorrelationMatrix,
    /// mode correlation at Tx given the final Rx SMCs
    pub r_t: ModeCorrelationMatrix,
    pub baseline_det: f64,
    pub trace: SequentialTrace,
}

/// Mode correlation at `side` given SMCs on the opposite side.
pub fn side_correlation(
    integ: &ProfileIntegrator,
    side: Side,
    own: &SideBasis,
    opposite: &SideBasis,
    q_opposite: &SmcMatrix,
) -> Result<ModeCorrelationMatrix> {
    let ant = Antenna::modes(opposite.trunc, q_opposite.clone())?;
    let marginal = integ.marginal(side, &ant, Some(&opposite.table))?;
    mode_correlation(&marginal, own, &integ.quad)
}

/// `det(Q_rᵀ R_r(Q_t) Q_r*)`: the Rx-side channel correlation determinant for a fixed antenna pair.
pub fn link_det(integ: &ProfileIntegrator, basis_t: &SideBasis, basis_r: &SideBasis, q_t: &SmcMatrix, q_r: &SmcMatrix) -> Result<f64> {
    let r_r = side_correlation(integ, Side::Rx, basis_r, basis_t, q_t)?;
    Ok(hermitian_det(&channel_correlation(q_r, &r_r)?))
}

/// Alternate Rx and Tx eigen-solutions starting from `initial_t`, until the
/// determinant change falls below the epsilon rule. `initial_r` only sets the
/// baseline (iteration 0) determinant.
pub fn sequential_optimize(
    integ: &ProfileIntegrator,
    basis_t: &SideBasis,
    basis_r: &SideBasis,
    n_t: usize,
    n_r: usize,
    initial_t: &SmcMatrix,
    initial_r: &SmcMatrix,
    rule: EpsilonRule,
) -> Result<SequentialResult> {
    if initial_t.nrows() != basis_t.trunc.j_count || initial_r.nrows() != basis_r.trunc.j_count {
        return Err(shape("initial SMCs matching the truncations", format!("{}/{} rows", initial_t.nrows(), initial_r.nrows())));
    }
    let baseline_det = link_det(integ, basis_t, basis_r, initial_t, initial_r)?;
    if !(baseline_det > 0.0) {
        return Err(domain(format!("baseline determinant {baseline_det} is not positive")));
    }
    let entry = |iter, side, det: f64| TraceEntry {
        iter,
        side,
        det,
        det_db: 10.0 * (det / baseline_det).log10(),
        capacity_proxy: det.log2(),
    };
    let mut trace = SequentialTrace {
        iterations: vec![entry(0, TraceSide::Init, baseline_det)],
        converged: false,
        epsilon_rule: rule.to_string(),
        n_modes: basis_r.trunc.j_count,
    };
    let mut q_t = initial_t.clone();
    let mut q_r = initial_r.clone();
    for iter in 1..=rule.max_iter {
        let det = if iter % 2 == 1 {
            let r_r = side_correlation(integ, Side::Rx, basis_r, basis_t, &q_t)?;
            q_r = optimal_smcs(&r_r, n_r)?;
            hermitian_det(&channel_correlation(&q_r, &r_r)?)
        } else {
            let r_t = side_correlation(integ, Side::Tx, basis_t, basis_r, &q_r)?;
            q_t = optimal_smcs(&r_t, n_t)?;
            hermitian_det(&channel_correlation(&q_t, &r_t)?)
        };
        let side = if iter % 2 == 1 { TraceSide::Rx } else { TraceSide::Tx };
        trace.iterations.push(entry(iter, side, det));
        if iter >= 2 {
            let it = &trace.iterations;
            let d_now = (it[iter].det - it[iter - 1].det).abs();
            let d_prev = (it[iter - 1].det - it[iter - 2].det).abs();
            if d_now < (rule.fraction * d_prev).max(rule.floor) {
                trace.converged = true;
                break;
            }
        }
    }
    if !trace.converged {
        return Err(Error::NoConvergence(Box::new(trace)));
    }
    let r_r = side_correlation(integ, Side::Rx, basis_r, basis_t, &q_t)?;
    let r_t = side_correlation(integ, Side::Tx, basis_t, basis_r, &q_r)?;
    Ok(SequentialResult {
        q_t,
        q_r,
        r_r,
        r_t,
        baseline_det,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    #[test]
    fn diagonal_problem() {
        let mut d = vec![c(0.0); 6];
        d[..4].copy_from_slice(&[c(4.0), c(3.0), c(2.0), c(1.0)]);
        let r = ModeCorrelationMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d))).unwrap();
        let q = optimal_smcs(&r, 2).unwrap();
        let mut expect = DMatrix::zeros(6, 2);
        expect[(0, 0)] = c(1.0);
        expect[(1, 1)] = c(1.0);
        assert!((q - expect).norm() < 1e-14);
        assert!(optimal_smcs(&r, 7).is_err());
        assert!(optimal_smcs(&r, 0).is_err());
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = DMatrix::from_element(2, 2, c(1.0));
        m[(0, 1)] = Complex64::new(1.0, 1.0);
        assert!(ModeCorrelationMatrix::new(m).is_err());
        assert!(ModeCorrelationMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn identity_columns_give_principal_submatrix() {
        let m = DMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                c(5.0 + i as f64)
            } else {
                Complex64::new(0.1 * (i + j) as f64, 0.05 * (i as f64 - j as f64))
            }
        });
        let r = ModeCorrelationMatrix::new(m.clone()).unwrap();
        let q = DMatrix::<Complex64>::identity(4, 2);
        let rc = channel_correlation(&q, &r).unwrap();
        assert!((rc - m.view((0, 0), (2, 2))).norm() < 1e-14);
        assert!(channel_correlation(&DMatrix::identity(3, 2), &r).is_err());
    }
}
