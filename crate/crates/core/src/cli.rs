//! Scenario configuration, the end-to-end pipeline and artifact writers behind
//! the `mimo-sme` binary.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use serde::Deserialize;

use crate::capacity::{average_capacity, dipole_array_smcs, CapacityConfig, CapacityCurve, DipoleArray, Scheme};
use crate::channel::{sphere_quadrature, AngularProfile, Antenna, JointAngularProfile, Polarization, ProfileIntegrator, Side};
use crate::currents::{coupling_matrix, current_map, planar_smcs, write_current_csv, CellQuadrature, SurfaceGrid};
use crate::error::{Error, Result};
use crate::modes::{directivity, truncate, ModeIndex, SmcMatrix, Truncation};
use crate::optimizer::{
    channel_correlation, hermitian_det, link_det, sequential_optimize, side_correlation, EpsilonRule, SequentialResult, SideBasis,
    TRACE_CSV_HEADER,
};
use crate::plot::{line_plot, polar_plot, Series};

/// Bundled two-by-two scenario (plate of side λ/2, Gaussian cluster at the horizon).
pub const DEFAULT_SCENARIO: &str = include_str!("../scenarios/default.toml");

/// Wavenumber for lengths expressed in wavelengths.
pub const K: f64 = 2.0 * PI;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    pub profile: ProfileConfig,
    pub antenna: AntennaConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub currents: CurrentsConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub capacity: CapacitySection,
}

fn default_seed() -> u64 {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Angles in degrees; spreads are `2σ`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub tx_mean_theta: f64,
    pub tx_mean_phi: f64,
    pub rx_mean_theta: f64,
    pub rx_mean_phi: f64,
    pub tx_spread_theta: f64,
    pub tx_spread_phi: f64,
    pub rx_spread_theta: f64,
    pub rx_spread_phi: f64,
    pub rho: Vec<f64>,
    pub design_rho: Option<f64>,
    #[serde(default = "default_pol")]
    pub polarization: Polarization,
}

fn default_pol() -> Polarization {
    Polarization::Theta
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaConfig {
    /// antenna volume radius in wavelengths
    pub radius: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    /// expected mode count, checked against the truncation
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub dipole_spacing: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { dipole_spacing: 0.35 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrentsConfig {
    pub side: f64,
    pub cells_per_axis: usize,
    pub svd_tol: f64,
    pub quad_order: usize,
}

impl Default for CurrentsConfig {
    fn default() -> Self {
        CurrentsConfig {
            side: 0.5,
            cells_per_axis: 40,
            svd_tol: 1e-6,
            quad_order: 4,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { n_theta: 48, n_phi: 96 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub fraction: f64,
    pub floor: f64,
    pub max_iter: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let r = EpsilonRule::default();
        OptimizerConfig {
            fraction: r.fraction,
            floor: r.floor,
            max_iter: r.max_iter,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySection {
    pub snr_db: Vec<f64>,
    pub realizations: usize,
    pub rays: usize,
}

impl Default for CapacitySection {
    fn default() -> Self {
        let c = CapacityConfig::default();
        CapacitySection {
            snr_db: c.snr_db,
            realizations: c.n_realizations,
            rays: c.n_rays,
        }
    }
}

/// Outcome of [`Scenario::validate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub info: Vec<String>,
    pub warnings: Vec<String>,
    pub errors: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for l in &self.info {
            s += &format!("{l}\n");
        }
        for l in &self.warnings {
            s += &format!("warning: {l}\n");
        }
        for l in &self.errors {
            s += &format!("error: {l}\n");
        }
        s
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Scenario::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn default_scenario() -> Self {
        Scenario::from_toml(DEFAULT_SCENARIO).expect("bundled scenario parses")
    }

    /// ρ used for the directivities, currents and capacity comparison.
    pub fn design_rho(&self) -> f64 {
        self.profile
            .design_rho
            .or_else(|| self.profile.rho.first().copied())
            .unwrap_or(0.0)
    }

    pub fn truncation(&self) -> Result<Truncation> {
        truncate(K, self.antenna.radius)
    }

    pub fn profile(&self, rho: f64) -> Result<JointAngularProfile> {
        let p = &self.profile;
        let d = PI / 180.0;
        JointAngularProfile::new(
            [p.tx_mean_theta * d, p.tx_mean_phi * d, p.rx_mean_theta * d, p.rx_mean_phi * d],
            [
                p.tx_spread_theta * d / 2.0,
                p.tx_spread_phi * d / 2.0,
                p.rx_spread_theta * d / 2.0,
                p.rx_spread_phi * d / 2.0,
            ],
            rho,
            p.polarization,
        )
    }

    pub fn grid(&self) -> Result<SurfaceGrid> {
        SurfaceGrid::new(self.currents.side, self.currents.cells_per_axis)
    }

    pub fn dipole_array(&self, count: usize) -> DipoleArray {
        DipoleArray {
            count,
            spacing: self.baseline.dipole_spacing,
            orientation: Vector3::z(),
        }
    }

    pub fn epsilon_rule(&self) -> EpsilonRule {
        EpsilonRule {
            fraction: self.optimizer.fraction,
            floor: self.optimizer.floor,
            max_iter: self.optimizer.max_iter,
        }
    }

    pub fn capacity_config(&self) -> CapacityConfig {
        CapacityConfig {
            snr_db: self.capacity.snr_db.clone(),
            n_realizations: self.capacity.realizations,
            n_rays: self.capacity.rays,
        }
    }

    /// Checks every parameter without running the pipeline.
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        match self.truncation() {
            Ok(t) => {
                r.info.push(format!("k*r0 = {:.4}: N = {}, J = {}", K * t.r0, t.n_max, t.j_count));
                if let Some(j) = self.antenna.modes {
                    if j != t.j_count {
                        r.warnings.push(format!("configured modes = {j} but the volume supports J = {}", t.j_count));
                    }
                }
                if self.antenna.n_tx == 0 || self.antenna.n_rx == 0 {
                    r.errors.push("n_tx and n_rx must be at least 1".into());
                } else if self.antenna.n_tx.max(self.antenna.n_rx) > t.j_count {
                    r.errors.push(format!("more antennas than modes (J = {})", t.j_count));
                }
                let grid_side = self.currents.side;
                if grid_side > 2.0 * t.r0 / 2f64.sqrt() * (1.0 + 1e-12) {
                    r.errors.push(format!(
                        "plane exceeds sphere: side {grid_side} needs radius {:.6} > r0 = {:.6}",
                        grid_side / 2f64.sqrt(),
                        t.r0
                    ));
                }
                for (count, name) in [(self.antenna.n_tx, "tx"), (self.antenna.n_rx, "rx")] {
                    let arr = self.dipole_array(count.max(1));
                    let half = 0.25;
                    let reach = arr
                        .positions()
                        .iter()
                        .map(|p| (p.norm_squared() + half * half).sqrt())
                        .fold(0.0, f64::max);
                    if reach > t.r0 * (1.0 + 1e-12) {
                        r.errors.push(format!("{name} dipole array reaches {reach:.4}, beyond r0 = {:.4}", t.r0));
                    }
                }
            }
            Err(e) => r.errors.push(format!("antenna.radius: {e}")),
        }
        if !(self.currents.side > 0.0) || self.currents.cells_per_axis == 0 {
            r.errors.push("currents.side and currents.cells_per_axis must be positive".into());
        } else {
            r.info.push(format!(
                "plate grid: {0}x{0} cells, {1} basis functions",
                self.currents.cells_per_axis,
                2 * self.currents.cells_per_axis * self.currents.cells_per_axis
            ));
        }
        if !(self.currents.svd_tol >= 0.0) || self.currents.quad_order == 0 {
            r.errors.push("currents.svd_tol must be >= 0 and currents.quad_order >= 1".into());
        }
        if self.profile.rho.is_empty() {
            r.errors.push("profile.rho needs at least one value".into());
        }
        let mut rhos = self.profile.rho.clone();
        rhos.push(self.design_rho());
        for rho in rhos {
            if let Err(e) = self.profile(rho) {
                r.errors.push(format!("profile (rho = {rho}): {e}"));
            }
        }
        if self.quadrature.n_theta < 2 || self.quadrature.n_phi < 2 {
            r.errors.push("quadrature needs at least 2 nodes per axis".into());
        }
        if self.capacity.realizations == 0 || self.capacity.rays == 0 {
            r.errors.push("capacity.realizations and capacity.rays must be at least 1".into());
        }
        if self.capacity.snr_db.iter().any(|s| !s.is_finite()) {
            r.errors.push("capacity.snr_db must be finite".into());
        }
        if !(self.optimizer.fraction > 0.0 && self.optimizer.fraction < 1.0) || self.optimizer.max_iter < 2 {
            r.errors.push("optimizer.fraction must lie in (0, 1) and max_iter >= 2".into());
        }
        r
    }
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub n_max: usize,
    pub j_count: usize,
    pub design_rho: f64,
    pub baseline_det: f64,
    pub optimal_det: f64,
    pub planar_det: f64,
    pub optimal_gain_db: f64,
    pub planar_gain_db: f64,
    pub coupling_rank: usize,
    pub residuals_tx: Vec<f64>,
    pub residuals_rx: Vec<f64>,
    pub capacity: Vec<CapacityCurve>,
}

impl Summary {
    /// Mean capacity of one scheme at one SNR.
    pub fn mean_at(&self, scheme: &str, snr_db: f64) -> Option<f64> {
        self.capacity
            .iter()
            .find(|c| c.scheme == scheme)
            .and_then(|c| c.at(snr_db))
            .map(|p| p.mean)
    }

    /// `C̄(Proposed) − C̄(other)` at one SNR.
    pub fn capacity_delta(&self, other: &str, snr_db: f64) -> Option<f64> {
        Some(self.mean_at(SCHEME_NAMES[0], snr_db)? - self.mean_at(other, snr_db)?)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s += &format!("n_max = {}\n", self.n_max);
        s += &format!("modes = {}\n", self.j_count);
        s += &format!("design_rho = {}\n", self.design_rho);
        s += &format!("baseline_det = {}\n", self.baseline_det);
        s += &format!("optimal_det = {}\n", self.optimal_det);
        s += &format!("planar_det = {}\n", self.planar_det);
        s += &format!("optimal_gain_db = {}\n", self.optimal_gain_db);
        s += &format!("planar_gain_db = {}\n", self.planar_gain_db);
        s += &format!("synthesis_gap_db = {}\n", self.optimal_gain_db - self.planar_gain_db);
        s += &format!("coupling_rank = {}\n", self.coupling_rank);
        s += &format!("residuals_tx = {:?}\n", self.residuals_tx);
        s += &format!("residuals_rx = {:?}\n", self.residuals_rx);
        if let Some(snr) = self.capacity.first().and_then(|c| {
            c.points
                .iter()
                .map(|p| p.snr_db)
                .min_by(|a, b| (a - 15.0).abs().total_cmp(&(b - 15.0).abs()))
        }) {
            s += &format!("delta_snr_db = {snr}\n");
            for other in &SCHEME_NAMES[1..] {
                if let Some(d) = self.capacity_delta(other, snr) {
                    s += &format!("capacity_delta_{} = {d}\n", other.to_lowercase().replace([' ', '(', ')'], ""));
                }
            }
        }
        s
    }
}

pub const SCHEME_NAMES: [&str; 4] = ["Proposed", "Proposed (Planar)", "Dipole array", "SISO"];

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?)))
}

/// Runs the full pipeline and writes every artifact into `out`.
pub fn run(scenario: &Scenario, out: &Path) -> Result<Summary> {
    let report = scenario.validate();
    if !report.is_ok() {
        return Err(Error::Config(report.errors.join("; ")));
    }
    fs::create_dir_all(out)?;
    let trunc = scenario.truncation()?;
    let quad = sphere_quadrature(scenario.quadrature.n_theta, scenario.quadrature.n_phi)?;
    let basis = SideBasis::new(trunc, &quad)?;
    let (n_t, n_r) = (scenario.antenna.n_tx, scenario.antenna.n_rx);
    let dip_t = dipole_array_smcs(&trunc, &scenario.dipole_array(n_t), &quad)?;
    let dip_r = dipole_array_smcs(&trunc, &scenario.dipole_array(n_r), &quad)?;
    let rule = scenario.epsilon_rule();

    // (a) convergence traces, one per ρ
    let design_rho = scenario.design_rho();
    let mut rhos = scenario.profile.rho.clone();
    if !rhos.iter().any(|r| (r - design_rho).abs() < 1e-15) {
        rhos.push(design_rho);
    }
    let mut trace_csv = csv_writer(out, "trace.csv")?;
    trace_csv.write_record(TRACE_CSV_HEADER)?;
    let mut design: Option<(ProfileIntegrator, SequentialResult)> = None;
    let mut trace_series = Vec::new();
    for &rho in &rhos {
        let integ = ProfileIntegrator::new(AngularProfile::Gaussian(scenario.profile(rho)?), quad.clone());
        match sequential_optimize(&integ, &basis, &basis, n_t, n_r, &dip_t, &dip_r, rule) {
            Ok(res) => {
                res.trace.write_csv(&mut trace_csv, rho)?;
                trace_series.push(Series {
                    name: format!("rho = {rho}"),
                    points: res.trace.iterations.iter().map(|e| (e.iter as f64, e.det_db)).collect(),
                });
                if (rho - design_rho).abs() < 1e-15 {
                    design = Some((integ, res));
                }
            }
            Err(Error::NoConvergence(trace)) => {
                trace.write_csv(&mut trace_csv, rho)?;
                trace_csv.flush()?;
                return Err(Error::NoConvergence(trace));
            }
            Err(e) => return Err(e),
        }
    }
    trace_csv.flush()?;
    drop(trace_csv);
    line_plot(&out.join("trace.svg"), "Sequential optimization", "iteration", "det gain [dB]", &trace_series)?;
    let (integ, res) = design.expect("design rho is always traced");

    // (d) currents and the realizable directivities
    let grid = scenario.grid()?;
    let z = coupling_matrix(&grid, &trunc, 1.0, CellQuadrature(scenario.currents.quad_order))?;
    let rank = z.pseudo_inverse(scenario.currents.svd_tol)?.rank;
    let (planar_t, cur_t) = planar_smcs(&z, &res.q_t, scenario.currents.svd_tol)?;
    let (planar_r, cur_r) = planar_smcs(&z, &res.q_r, scenario.currents.svd_tol)?;
    for (side, curs) in [(Side::Tx, &cur_t), (Side::Rx, &cur_r)] {
        for (i, c) in curs.iter().enumerate() {
            let f = File::create(out.join(format!("current_{}_{}.csv", side.as_str(), i + 1)))?;
            write_current_csv(BufWriter::new(f), &current_map(&grid, &c.a)?)?;
        }
    }

    // matrices behind the reported determinants
    let r_opt = side_correlation(&integ, Side::Rx, &basis, &basis, &res.q_t)?;
    let r_planar = side_correlation(&integ, Side::Rx, &basis, &basis, &planar_t)?;
    let r_dip = side_correlation(&integ, Side::Rx, &basis, &basis, &dip_t)?;
    let optimal_det = hermitian_det(&channel_correlation(&res.q_r, &r_opt)?);
    let planar_det = hermitian_det(&channel_correlation(&planar_r, &r_planar)?);
    let baseline_det = res.baseline_det;
    debug_assert!((link_det(&integ, &basis, &basis, &dip_t, &dip_r)? - baseline_det).abs() <= 1e-12 * baseline_det);
    let mut mats = csv_writer(out, "matrices.csv")?;
    mats.write_record(["name", "row", "col", "re", "im"])?;
    for (name, m) in [
        ("r_optimal", r_opt.matrix()),
        ("q_optimal_rx", &res.q_r),
        ("q_optimal_tx", &res.q_t),
        ("r_planar", r_planar.matrix()),
        ("q_planar_rx", &planar_r),
        ("q_planar_tx", &planar_t),
        ("r_dipole", r_dip.matrix()),
        ("q_dipole_rx", &dip_r),
        ("q_dipole_tx", &dip_t),
    ] {
        write_matrix(&mut mats, name, m)?;
    }
    mats.flush()?;
    drop(mats);

    // (b) directivity cuts and (c) SMC tables
    let schemes_q: [(&str, &SmcMatrix, &SmcMatrix); 3] = [
        ("optimal", &res.q_t, &res.q_r),
        ("planar", &planar_t, &planar_r),
        ("dipole", &dip_t, &dip_r),
    ];
    write_smc_table(out, &trunc, &schemes_q)?;
    write_directivity_cuts(out, &trunc, &schemes_q)?;

    // (e) capacity comparison
    let siso = dipole_array_smcs(&trunc, &scenario.dipole_array(1), &quad)?;
    let schemes = vec![
        scheme(SCHEME_NAMES[0], &trunc, &res.q_t, &res.q_r)?,
        scheme(SCHEME_NAMES[1], &trunc, &planar_t, &planar_r)?,
        scheme(SCHEME_NAMES[2], &trunc, &dip_t, &dip_r)?,
        scheme(SCHEME_NAMES[3], &trunc, &siso, &siso)?,
    ];
    let capacity = average_capacity(&schemes, &integ.profile, &scenario.capacity_config(), scenario.seed)?;
    write_capacity(out, &capacity)?;

    // (f) summary
    let summary = Summary {
        n_max: trunc.n_max,
        j_count: trunc.j_count,
        design_rho,
        baseline_det,
        optimal_det,
        planar_det,
        optimal_gain_db: 10.0 * (optimal_det / baseline_det).log10(),
        planar_gain_db: 10.0 * (planar_det / baseline_det).log10(),
        coupling_rank: rank,
        residuals_tx: cur_t.iter().map(|c| c.residual).collect(),
        residuals_rx: cur_r.iter().map(|c| c.residual).collect(),
        capacity,
    };
    fs::write(out.join("summary.txt"), summary.render())?;
    Ok(summary)
}

fn scheme(name: &str, trunc: &Truncation, q_t: &SmcMatrix, q_r: &SmcMatrix) -> Result<Scheme> {
    Ok(Scheme {
        name: name.to_string(),
        tx: Antenna::modes(*trunc, q_t.clone())?,
        rx: Antenna::modes(*trunc, q_r.clone())?,
    })
}

fn write_matrix<W: Write>(w: &mut csv::Writer<W>, name: &str, m: &DMatrix<Complex64>) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            w.write_record(&[name.to_string(), r.to_string(), c.to_string(), m[(r, c)].re.to_string(), m[(r, c)].im.to_string()])?;
        }
    }
    Ok(())
}

/// Reads back the matrices written by [`run`], keyed by name.
pub fn read_matrices(path: &Path) -> Result<Vec<(String, DMatrix<Complex64>)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut entries: Vec<(String, Vec<(usize, usize, Complex64)>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| Error::Config(format!("matrices row {:?}: {e}", rec.position())))
        };
        let idx = |i: usize| -> Result<usize> {
            rec[i].parse::<usize>().map_err(|e| Error::Config(format!("matrices row {:?}: {e}", rec.position())))
        };
        let v = (idx(1)?, idx(2)?, Complex64::new(parse(3)?, parse(4)?));
        match entries.iter_mut().find(|(n, _)| n == &rec[0]) {
            Some((_, list)) => list.push(v),
            None => entries.push((rec[0].to_string(), vec![v])),
        }
    }
    Ok(entries
        .into_iter()
        .map(|(name, list)| {
            let rows = list.iter().map(|e| e.0).max().unwrap_or(0) + 1;
            let cols = list.iter().map(|e| e.1).max().unwrap_or(0) + 1;
            let mut m = DMatrix::zeros(rows, cols);
            for (r, c, v) in list {
                m[(r, c)] = v;
            }
            (name, m)
        })
        .collect())
}

fn write_smc_table(out: &Path, trunc: &Truncation, schemes: &[(&str, &SmcMatrix, &SmcMatrix)]) -> Result<()> {
    let mut w = csv_writer(out, "smc.csv")?;
    w.write_record(["scheme", "side", "port", "j", "s", "m", "n", "re", "im", "abs"])?;
    for &(name, q_t, q_r) in schemes {
        for (side, q) in [("tx", q_t), ("rx", q_r)] {
            for port in 0..q.ncols() {
                for (j, mode) in trunc.modes().enumerate() {
                    let v = q[(j, port)];
                    let ModeIndex { s, m, n } = mode;
                    w.write_record(&[
                        name.to_string(),
                        side.to_string(),
                        (port + 1).to_string(),
                        (j + 1).to_string(),
                        s.to_string(),
                        m.to_string(),
                        n.to_string(),
                        v.re.to_string(),
                        v.im.to_string(),
                        v.norm().to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Horizontal cut `θ = 90°` over φ, and vertical cuts at φ = 0° and 45° over θ ∈ [−180°, 180°].
fn cut_points(cut: &str) -> Vec<(f64, f64, f64)> {
    let d = PI / 180.0;
    (0..=360)
        .map(|i| {
            let a = -180.0 + i as f64;
            match cut {
                "horizontal" => (a, 90.0 * d, a * d),
                _ => {
                    let phi0 = if cut == "vertical_phi0" { 0.0 } else { 45.0 * d };
                    // negative angles continue the cut through the opposite half-plane
                    if a >= 0.0 {
                        (a, a * d, phi0)
                    } else {
                        (a, -a * d, phi0 + PI)
                    }
                }
            }
        })
        .collect()
}

fn write_directivity_cuts(out: &Path, trunc: &Truncation, schemes: &[(&str, &SmcMatrix, &SmcMatrix)]) -> Result<()> {
    let cuts = ["horizontal", "vertical_phi0", "vertical_phi45"];
    let mut w = csv_writer(out, "directivity.csv")?;
    w.write_record(["scheme", "side", "port", "cut", "angle_deg", "abs_e_theta", "arg_e_theta", "abs_e_phi", "arg_e_phi"])?;
    for &(name, q_t, q_r) in schemes {
        for cut in cuts {
            let mut series = Vec::new();
            for (side, q) in [("tx", q_t), ("rx", q_r)] {
                for port in 0..q.ncols() {
                    let col = q.column(port).into_owned();
                    let mut pts = Vec::new();
                    for (angle, th, ph) in cut_points(cut) {
                        let f = directivity(trunc, &col, th.clamp(0.0, PI), ph)?;
                        w.write_record(&[
                            name.to_string(),
                            side.to_string(),
                            (port + 1).to_string(),
                            cut.to_string(),
                            angle.to_string(),
                            f.e_theta.norm().to_string(),
                            f.e_theta.arg().to_string(),
                            f.e_phi.norm().to_string(),
                            f.e_phi.arg().to_string(),
                        ])?;
                        if side == "rx" {
                            pts.push((angle * PI / 180.0, f.e_theta.norm()));
                        }
                    }
                    if side == "rx" {
                        series.push(Series {
                            name: format!("antenna #{} |E_theta|", port + 1),
                            points: pts,
                        });
                    }
                }
            }
            polar_plot(&out.join(format!("directivity_{name}_{cut}.svg")), &format!("{name} receive antennas, {cut}"), &series)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_capacity(out: &Path, curves: &[CapacityCurve]) -> Result<()> {
    let mut w = csv_writer(out, "capacity.csv")?;
    w.write_record(["snr_db", "scheme", "mean_capacity", "stderr"])?;
    for c in curves {
        for p in &c.points {
            w.write_record(&[p.snr_db.to_string(), c.scheme.clone(), p.mean.to_string(), p.stderr.to_string()])?;
        }
    }
    w.flush()?;
    let series: Vec<Series> = curves
        .iter()
        .map(|c| Series {
            name: c.scheme.clone(),
            points: c.points.iter().map(|p| (p.snr_db, p.mean)).collect(),
        })
        .collect();
    line_plot(&out.join("capacity.svg"), "Average channel capacity", "SNR [dB]", "capacity [bit/s/Hz]", &series)
}

#[derive(Debug, Parser)]
#[command(name = "mimo-sme", version, about = "Capacity-optimal MIMO antenna directivities via spherical mode expansion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline and write all artifacts.
    Run {
        /// scenario file; the bundled default is used when omitted
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// correlation coefficient to trace; repeatable, replaces the configured list
        #[arg(long)]
        rho: Vec<f64>,
        /// comma separated SNR grid in dB
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Option<Vec<f64>>,
        /// Monte Carlo realizations
        #[arg(long)]
        realizations: Option<usize>,
    },
    /// Check a scenario file and report the derived mode count.
    Validate { config: PathBuf },
    /// Print the bundled default scenario.
    DefaultConfig,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Executes a parsed command line, writing human-readable output to `stdout`
/// and `stderr`. Returns the process exit code.
pub fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match cli.command {
        Command::DefaultConfig => {
            let _ = stdout.write_all(DEFAULT_SCENARIO.as_bytes());
            EXIT_OK
        }
        Command::Validate { config } => match Scenario::load(&config) {
            Ok(s) => {
                let report = s.validate();
                let _ = write!(stdout, "{}", report.render());
                if report.is_ok() {
                    EXIT_OK
                } else {
                    EXIT_CONFIG
                }
            }
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                EXIT_CONFIG
            }
        },
        Command::Run {
            config,
            seed,
            out,
            rho,
            snr,
            realizations,
        } => {
            let scenario = match config {
                Some(p) => Scenario::load(&p),
                None => Ok(Scenario::default_scenario()),
            };
            let mut scenario = match scenario {
                Ok(s) => s,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    return EXIT_CONFIG;
                }
            };
            if let Some(s) = seed {
                scenario.seed = s;
            }
            if !rho.is_empty() {
                if !rho.iter().any(|r| Some(*r) == scenario.profile.design_rho) {
                    scenario.profile.design_rho = Some(rho[0]);
                }
                scenario.profile.rho = rho;
            }
            if let Some(s) = snr {
                scenario.capacity.snr_db = s;
            }
            if let Some(n) = realizations {
                scenario.capacity.realizations = n;
            }
            let out = out.unwrap_or_else(|| scenario.output_dir.clone());
            match run(&scenario, &out) {
                Ok(summary) => {
                    let _ = write!(stdout, "{}", summary.render());
                    let _ = writeln!(stdout, "artifacts written to {}", out.display());
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    if let Error::NoConvergence(trace) = &e {
                        for t in &trace.iterations {
                            let _ = writeln!(stderr, "  iter {} {} det_db {}", t.iter, t.side, t.det_db);
                        }
                    }
                    exit_code(&e)
                }
            }
        }
    }
}
