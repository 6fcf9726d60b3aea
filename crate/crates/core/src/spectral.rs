//! Radial discretization of the bath operator `L` and the elastic linearized operator
//! `𝓛₁ = 2Q₁⁺(·, M) − σ₁ − M ∫|v−w|· + L` in `L²(M⁻¹)`.
//!
//! Matrices act on values at the nodes of a [`SpeedGrid`]. The symmetric representation is
//! `S = D A D⁻¹` with `Dᵢ = √(ρᵢ/Mᵢ)`, `ρᵢ = rᵢ² Δrᵢ`, in which both operators are symmetric.
//! The kink of the reduced kernels on the diagonal is handled by product integration on the
//! panel that contains it.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::{elastic_steady_state, sigma_at_speed, BathParams, KernelParams, MaxwellianParams};
use crate::error::{Error, Result};
use crate::grid::SpeedGrid;
use crate::quadrature::{adaptive, AdaptiveOptions, GaussLegendre};
use crate::rng::{self, Phase};
use crate::special::erf_inv;

/// Panels and nodes per panel of the default grid.
pub const DEFAULT_PANELS: usize = 25;
pub const DEFAULT_ORDER: usize = 8;
/// Largest acceptable estimated error of a reduced kernel entry, relative to the entry.
pub const ENTRY_TOL: f64 = 1e-7;
/// Largest acceptable `‖A M‖ / ‖M‖` before the null-space projection.
pub const RESIDUAL_TOL: f64 = 1e-5;
/// Largest acceptable relative asymmetry of an input to [`spectral_gap`].
pub const SYMMETRY_TOL: f64 = 1e-10;

const PRODUCT_ORDER: usize = 24;

/// Grid with `DEFAULT_PANELS × DEFAULT_ORDER` nodes on `[0, 8 √max(Θ0, Θ#)]`.
pub fn default_grid(bath: &BathParams) -> Result<SpeedGrid> {
    refined_grid(bath, 1)
}

/// Default grid with `factor` times as many panels.
pub fn refined_grid(bath: &BathParams, factor: usize) -> Result<SpeedGrid> {
    bath.validate()?;
    let cutoff = 8.0 * bath.theta0.max(bath.steady_temperature()).sqrt();
    SpeedGrid::composite(DEFAULT_PANELS * factor.max(1), DEFAULT_ORDER, cutoff)
}

/// Lower bound `η(1+e)/(4√5)`, `η = √(2Θ0) erf⁻¹(1/2)`, on the gap of `L`.
pub fn gap_lower_bound(bath: &BathParams) -> f64 {
    let eta = (2.0 * bath.theta0).sqrt() * erf_inv(0.5);
    eta * (1.0 + bath.e.get()) / (4.0 * 5f64.sqrt())
}

/// `∫_{S²} k(r ω₀, r′ ω) dω` for the kernel with parameters `kp` (bath at rest).
pub fn radial_kernel(kp: &KernelParams, r: f64, rp: f64) -> Result<(f64, f64)> {
    let beta = kp.beta0;
    let slope = 1.0 + kp.mu;
    if r * rp == 0.0 {
        // One speed vanishes: |v − w| is the other speed on the whole sphere.
        let d = r + rp;
        if d == 0.0 {
            return Err(Error::Singular);
        }
        let arg = slope * d - d;
        return Ok((4.0 * PI * kp.c0 / d * (-beta * arg * arg).exp(), 0.0));
    }
    let c = r * r - rp * rp;
    let lo = (r - rp).abs();
    let hi = r + rp;
    let mut breaks = Vec::new();
    if c < 0.0 {
        let peak = (-c / slope).sqrt();
        if peak > lo && peak < hi {
            breaks.push(peak);
        }
    }
    let f = |rho: f64| {
        let arg = slope * rho + if rho > 0.0 { c / rho } else { 0.0 };
        (-beta * arg * arg).exp()
    };
    let q = adaptive(f, lo, hi, &breaks, AdaptiveOptions::rel(1e-12)).or_else(|_| {
        adaptive(
            f,
            lo,
            hi,
            &breaks,
            AdaptiveOptions {
                rel_tol: 1e-10,
                abs_tol: 1e-300,
                max_intervals: 50_000,
            },
        )
    })?;
    let scale = 2.0 * PI * kp.c0 / (r * rp);
    Ok((scale * q.value, scale * q.error))
}

/// `∫_{S²} |r ω₀ − r′ ω| dω`.
pub fn radial_relative_speed(r: f64, rp: f64) -> f64 {
    if r * rp == 0.0 {
        return 4.0 * PI * (r + rp);
    }
    2.0 * PI / (3.0 * r * rp) * ((r + rp).powi(3) - (r - rp).abs().powi(3))
}

/// Lagrange basis polynomials through `nodes`, evaluated at `t`.
fn lagrange(nodes: &[f64], t: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|j| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &x)| (t - x) / (nodes[j] - x))
                .product()
        })
        .collect()
}

/// Quadrature row for `f ↦ ∫ r′² t(r_i, r′) f(r′) dr′` with product integration on the panel
/// that contains `r_i`.
fn product_row<F: Fn(f64, f64) -> Result<f64>>(grid: &SpeedGrid, i: usize, t: &F) -> Result<Vec<f64>> {
    let ri = grid.nodes[i];
    let panel = grid.panel_of(i);
    let mut row = Vec::with_capacity(grid.len());
    for (j, (&rj, &lw)) in grid.nodes.iter().zip(&grid.line_weights).enumerate() {
        if grid.panel_of(j) != panel {
            row.push(lw * rj * rj * t(ri, rj)?);
        } else {
            row.push(0.0);
        }
    }
    let first = panel * grid.order;
    let local = &grid.nodes[first..first + grid.order];
    let (a, b) = grid.panel_bounds(panel);
    let gl = GaussLegendre::new(PRODUCT_ORDER);
    for (lo, hi) in [(a, ri), (ri, b)] {
        for (x, w) in gl.mapped(lo, hi) {
            let val = w * x * x * t(ri, x)?;
            for (k, l) in lagrange(local, x).into_iter().enumerate() {
                row[first + k] += val * l;
            }
        }
    }
    Ok(row)
}

/// Product-integrated matrix of the radial kernel of `kp`, with the largest relative entry error.
pub fn reduce_kernel_radial(kp: &KernelParams, grid: &SpeedGrid) -> Result<(DMatrix<f64>, f64)> {
    if kp.u0.norm() != 0.0 {
        return Err(Error::input("radial reduction needs a bath at rest"));
    }
    let worst = std::sync::Mutex::new(0.0f64);
    let t = |r: f64, rp: f64| -> Result<f64> {
        let (value, error) = radial_kernel(kp, r, rp)?;
        if value > 0.0 {
            let mut w = worst.lock().unwrap_or_else(|e| e.into_inner());
            *w = w.max(error / value);
        }
        Ok(value)
    };
    let rows: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| product_row(grid, i, &t))
        .collect::<Result<_>>()?;
    let worst = worst.into_inner().unwrap_or_else(|e| e.into_inner());
    if worst > ENTRY_TOL {
        return Err(Error::Quadrature {
            what: "radial kernel entry",
            achieved: worst,
            requested: ENTRY_TOL,
        });
    }
    let n = grid.len();
    Ok((DMatrix::from_fn(n, n, |i, j| rows[i][j]), worst))
}

fn relative_speed_matrix(grid: &SpeedGrid) -> Result<DMatrix<f64>> {
    let t = |r: f64, rp: f64| Ok(radial_relative_speed(r, rp));
    let rows: Vec<Vec<f64>> = (0..grid.len()).map(|i| product_row(grid, i, &t)).collect::<Result<_>>()?;
    let n = grid.len();
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    LinearL,
    LinearizedL1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OperatorCalibration {
    /// `‖A M‖ / ‖M‖` in `L²(M⁻¹)` before the null-space projection.
    pub residual: f64,
    /// Largest `|(K M)ᵢ / (σᵢ Mᵢ) − 1|` for nodes below half the cutoff.
    pub bulk_column_defect: f64,
    /// Largest relative reduced-kernel entry error.
    pub entry_error: f64,
    /// Largest `|S − Sᵀ| / max|S|` before symmetrization.
    pub asymmetry: f64,
    /// Gain constant of `𝓛₁`.
    pub c1: Option<f64>,
    /// `2 C0` of the elastic bath at temperature `Θ#`.
    pub c1_reference: Option<f64>,
}

/// Symmetric matrix of `L` or `𝓛₁` on a speed grid.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub kind: OperatorKind,
    pub bath: BathParams,
    pub grid: SpeedGrid,
    /// `S = D A D⁻¹`.
    pub matrix: DMatrix<f64>,
    /// `Dᵢ = √(ρᵢ/Mᵢ)`.
    pub scale: Vec<f64>,
    /// Unit null vector `D M / |D M|`.
    pub null_vector: DVector<f64>,
    pub maxwellian: MaxwellianParams,
    /// `min` of the multiplication part; the continuous spectrum starts at `−essential_edge`.
    pub essential_edge: f64,
    pub calibration: OperatorCalibration,
}

/// Pieces shared by both operators.
struct Frame {
    m: MaxwellianParams,
    mvals: Vec<f64>,
    rho: Vec<f64>,
}

impl Frame {
    fn new(grid: &SpeedGrid, bath: &BathParams) -> Self {
        let m = elastic_steady_state(bath);
        Frame {
            mvals: grid.nodes.iter().map(|&r| m.radial_density(r)).collect(),
            rho: grid.nodes.iter().zip(&grid.line_weights).map(|(r, w)| r * r * w).collect(),
            m,
        }
    }

    fn apply_to_m(&self, a: &DMatrix<f64>) -> DVector<f64> {
        a * DVector::from_column_slice(&self.mvals)
    }

    /// `L²(M⁻¹)` norm with the radial measure `ρ`.
    fn norm(&self, g: &DVector<f64>) -> f64 {
        g.iter()
            .zip(&self.rho)
            .zip(&self.mvals)
            .map(|((g, r), m)| r * g * g / m)
            .sum::<f64>()
            .sqrt()
    }

    fn residual(&self, a: &DMatrix<f64>) -> f64 {
        let mv = DVector::from_column_slice(&self.mvals);
        self.norm(&(a * &mv)) / self.norm(&mv)
    }
}

fn check_grid(grid: &SpeedGrid, bath: &BathParams) -> Result<()> {
    bath.validate()?;
    if bath.u0.norm() != 0.0 {
        return Err(Error::input("spectral discretization needs a bath at rest"));
    }
    if grid.is_empty() || grid.nodes.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::input("speed grid must have positive nodes"));
    }
    Ok(())
}

/// `K − diag(σ)` for the bath operator, with its kernel error.
fn bath_matrix(grid: &SpeedGrid, bath: &BathParams) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    let kp = KernelParams::calibrate(bath)?;
    let (k, err) = reduce_kernel_radial(&kp, grid)?;
    let sigma = DVector::from_iterator(grid.len(), grid.nodes.iter().map(|&r| sigma_at_speed(bath.theta0, r)));
    Ok((k, sigma, err))
}

fn finish(
    kind: OperatorKind,
    grid: &SpeedGrid,
    bath: &BathParams,
    frame: Frame,
    a: DMatrix<f64>,
    essential_edge: f64,
    mut calibration: OperatorCalibration,
) -> Result<OperatorMatrix> {
    calibration.residual = frame.residual(&a);
    if !(calibration.residual <= RESIDUAL_TOL) {
        return Err(Error::Calibration {
            what: "null vector",
            residual: calibration.residual,
            tolerance: RESIDUAL_TOL,
        });
    }
    let n = grid.len();
    let scale: Vec<f64> = frame.rho.iter().zip(&frame.mvals).map(|(r, m)| (r / m).sqrt()).collect();
    let mut s = DMatrix::from_fn(n, n, |i, j| scale[i] * a[(i, j)] / scale[j]);
    let max = s.amax();
    calibration.asymmetry = (&s - s.transpose()).amax() / max;
    s = 0.5 * (&s + s.transpose());
    let mut null = DVector::from_iterator(n, frame.rho.iter().zip(&frame.mvals).map(|(r, m)| (r * m).sqrt()));
    null /= null.norm();
    let r = &s * &null;
    let c = null.dot(&r);
    s -= &r * null.transpose() + &null * r.transpose();
    s += c * &null * null.transpose();
    Ok(OperatorMatrix {
        kind,
        bath: *bath,
        grid: grid.clone(),
        matrix: s,
        scale,
        null_vector: null,
        maxwellian: frame.m,
        essential_edge,
        calibration,
    })
}

fn bulk_column_defect(grid: &SpeedGrid, frame: &Frame, k: &DMatrix<f64>, sigma: &DVector<f64>) -> f64 {
    let km = frame.apply_to_m(k);
    grid.nodes
        .iter()
        .enumerate()
        .filter(|(_, &r)| r <= 0.5 * grid.cutoff)
        .map(|(i, _)| (km[i] / (sigma[i] * frame.mvals[i]) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Matrix of `L f = ∫ k(·, w) f(w) dw − σ f`.
pub fn discretize_l(grid: &SpeedGrid, bath: &BathParams) -> Result<OperatorMatrix> {
    check_grid(grid, bath)?;
    let frame = Frame::new(grid, bath);
    let (k, sigma, entry_error) = bath_matrix(grid, bath)?;
    let calibration = OperatorCalibration {
        residual: 0.0,
        bulk_column_defect: bulk_column_defect(grid, &frame, &k, &sigma),
        entry_error,
        asymmetry: 0.0,
        c1: None,
        c1_reference: None,
    };
    let a = k - DMatrix::from_diagonal(&sigma);
    finish(OperatorKind::LinearL, grid, bath, frame, a, sigma_at_speed(bath.theta0, 0.0), calibration)
}

/// Kernel parameters of `2Q₁⁺(·, M)` with `C0 = 1`.
fn elastic_gain_kernel(bath: &BathParams) -> Result<KernelParams> {
    KernelParams::unnormalized(&BathParams::centered(bath.steady_temperature(), 1.0)?)
}

/// Matrix of `𝓛₁ = 𝓛⁺ − σ₁ − M ∫|v−w|· + L` with `C1` fixed by `∫ 𝓛₁ M = 0`.
pub fn discretize_linearized(grid: &SpeedGrid, bath: &BathParams) -> Result<OperatorMatrix> {
    check_grid(grid, bath)?;
    let frame = Frame::new(grid, bath);
    let (k, sigma, err0) = bath_matrix(grid, bath)?;
    let k1p = elastic_gain_kernel(bath)?;
    let (k1, err1) = reduce_kernel_radial(&k1p, grid)?;
    let theta = frame.m.theta;
    let sigma1 = DVector::from_iterator(grid.len(), grid.nodes.iter().map(|&r| sigma_at_speed(theta, r)));
    let p = relative_speed_matrix(grid)?;
    let mdiag = DMatrix::from_diagonal(&DVector::from_column_slice(&frame.mvals));
    let rest = &k - DMatrix::from_diagonal(&sigma) - DMatrix::from_diagonal(&sigma1) - mdiag * p;
    let rho = DVector::from_column_slice(&frame.rho);
    let gain_mass = rho.dot(&frame.apply_to_m(&k1));
    let rest_mass = rho.dot(&frame.apply_to_m(&rest));
    let c1 = -rest_mass / gain_mass;
    let calibration = OperatorCalibration {
        residual: 0.0,
        bulk_column_defect: bulk_column_defect(grid, &frame, &k, &sigma),
        entry_error: err0.max(err1),
        asymmetry: 0.0,
        c1: Some(c1),
        c1_reference: Some(2.0 * k1p.c0_closed_form()),
    };
    let a = c1 * k1 + rest;
    let edge = sigma_at_speed(bath.theta0, 0.0) + sigma_at_speed(theta, 0.0);
    finish(OperatorKind::LinearizedL1, grid, bath, frame, a, edge, calibration)
}

impl OperatorMatrix {
    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }

    /// Eigenvalues of `S`, descending (the first is the null eigenvalue).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// `A f` for values `f` at the grid nodes.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        let x = DVector::from_iterator(f.len(), f.iter().zip(&self.scale).map(|(f, d)| f * d));
        let y = &self.matrix * x;
        Ok(y.iter().zip(&self.scale).map(|(y, d)| y / d).collect())
    }

    /// `∫ f dv` on the grid.
    pub fn integral(&self, f: &[f64]) -> f64 {
        let w = &self.grid.weights;
        f.iter().zip(w).map(|(f, w)| f * w).sum()
    }

    /// `L²(M⁻¹)` norm on the grid.
    pub fn norm(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.scale).map(|(f, d)| (f * d).powi(2)).sum::<f64>().sqrt()
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::input(format!("vector of length {} on a grid of {}", f.len(), self.len())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GapReport {
    pub gap: f64,
    /// Eigenvalues of the symmetric matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues with `|λ| < gap/100`.
    pub null_count: usize,
    /// Eigenvalues below `−essential_edge`, artifacts of the continuous spectrum.
    pub below_edge: usize,
    pub essential_edge: f64,
    pub max_eigenvalue: f64,
}

/// Smallest nonzero eigenvalue of `−A`.
pub fn spectral_gap(op: &OperatorMatrix) -> Result<GapReport> {
    let s = &op.matrix;
    if s.nrows() < 2 || s.nrows() != s.ncols() {
        return Err(Error::input("spectral gap needs a square matrix of size at least 2"));
    }
    let asym = (s - s.transpose()).amax() / s.amax();
    if asym > SYMMETRY_TOL {
        return Err(Error::input(format!("matrix asymmetry {asym:.3e} exceeds {SYMMETRY_TOL:.0e}")));
    }
    let ev = op.eigenvalues();
    let gap = -ev[1];
    Ok(GapReport {
        gap,
        null_count: ev.iter().filter(|l| l.abs() < gap / 100.0).count(),
        below_edge: ev.iter().filter(|&&l| l < -op.essential_edge).count(),
        essential_edge: op.essential_edge,
        max_eigenvalue: ev[0],
        eigenvalues: ev,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GapRefinement {
    pub coarse_nodes: usize,
    pub fine_nodes: usize,
    pub coarse: f64,
    pub fine: f64,
    pub relative_change: f64,
    /// Second-order extrapolation `fine + (fine − coarse)/3`.
    pub richardson: f64,
}

/// Gap on the default grid and on the grid with twice as many panels.
pub fn gap_refinement(kind: OperatorKind, bath: &BathParams) -> Result<GapRefinement> {
    let build = |grid: &SpeedGrid| match kind {
        OperatorKind::LinearL => discretize_l(grid, bath),
        OperatorKind::LinearizedL1 => discretize_linearized(grid, bath),
    };
    let coarse_grid = default_grid(bath)?;
    let fine_grid = refined_grid(bath, 2)?;
    let coarse = spectral_gap(&build(&coarse_grid)?)?.gap;
    let fine = spectral_gap(&build(&fine_grid)?)?.gap;
    Ok(GapRefinement {
        coarse_nodes: coarse_grid.len(),
        fine_nodes: fine_grid.len(),
        coarse,
        fine,
        relative_change: (fine - coarse).abs() / fine.abs(),
        richardson: fine + (fine - coarse) / 3.0,
    })
}

/// Solve `A h = g` with `∫ h = 0` for mean-zero `g`.
pub fn solve_mean_zero(op: &OperatorMatrix, g: &[f64]) -> Result<Vec<f64>> {
    op.check_len(g)?;
    let mass = op.integral(g);
    let scale: f64 = g.iter().zip(&op.grid.weights).map(|(g, w)| (g * w).abs()).sum();
    if mass.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::input(format!("right-hand side is not mean-zero (∫g = {mass:.3e})")));
    }
    let n = op.len();
    let y = DVector::from_iterator(n, g.iter().zip(&op.scale).map(|(g, d)| g * d));
    let y = &y - op.null_vector.dot(&y) * &op.null_vector;
    let system = &op.matrix + &op.null_vector * op.null_vector.transpose();
    let x = system.lu().solve(&y).ok_or(Error::Singular)?;
    let x = &x - op.null_vector.dot(&x) * &op.null_vector;
    Ok(x.iter().zip(&op.scale).map(|(x, d)| x / d).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SpectrumReport {
    pub kind: OperatorKind,
    pub e: f64,
    pub theta0: f64,
    pub grid_size: usize,
    pub eigenvalues: Vec<f64>,
    pub gap: f64,
    pub gap_bound: f64,
    pub null_count: usize,
    pub below_edge: usize,
    pub essential_edge: f64,
    pub calibration_residuals: OperatorCalibration,
}

impl SpectrumReport {
    pub fn new(op: &OperatorMatrix, gap: &GapReport) -> Self {
        SpectrumReport {
            kind: op.kind,
            e: op.bath.e.get(),
            theta0: op.bath.theta0,
            grid_size: op.len(),
            eigenvalues: gap.eigenvalues.clone(),
            gap: gap.gap,
            gap_bound: gap_lower_bound(&op.bath),
            null_count: gap.null_count,
            below_edge: gap.below_edge,
            essential_edge: gap.essential_edge,
            calibration_residuals: op.calibration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GainConsistency {
    /// Temperature of the Maxwellian test density `h`.
    pub test_theta: f64,
    /// `∫ |v|⁴ (𝓛⁺h)(v) dv` from the calibrated single-kernel form.
    pub kernel_value: f64,
    /// The same moment of `2Q₁⁺(h, M)` by Monte Carlo over collision pairs.
    pub direct_value: f64,
    pub direct_error: f64,
    pub relative_discrepancy: f64,
}

/// Compare the calibrated `𝓛⁺` with the Boltzmann gain `2Q₁⁺(h, M)` on `h = M_θ`.
pub fn gain_consistency(op: &OperatorMatrix, test_theta: f64, pairs: usize, seed: u64) -> Result<GainConsistency> {
    let c1 = match (op.kind, op.calibration.c1) {
        (OperatorKind::LinearizedL1, Some(c1)) => c1,
        _ => return Err(Error::input("gain consistency needs a linearized operator")),
    };
    if !(test_theta > 0.0) || pairs < 2 {
        return Err(Error::input("gain consistency needs a positive temperature and pairs"));
    }
    let grid = &op.grid;
    let h = MaxwellianParams::new(1.0, crate::velocity::Velocity::ZERO, test_theta)?;
    let hvals: Vec<f64> = grid.nodes.iter().map(|&r| h.radial_density(r)).collect();
    let (k1, _) = reduce_kernel_radial(&elastic_gain_kernel(&op.bath)?.with_c0(c1), grid)?;
    let gain = &k1 * DVector::from_column_slice(&hvals);
    let kernel_value: f64 = grid.nodes.iter().zip(&grid.weights).zip(gain.iter()).map(|((r, w), g)| w * r.powi(4) * g).sum();

    let theta_m = op.maxwellian.theta;
    const PER_STREAM: usize = 8192;
    let streams = pairs.div_ceil(PER_STREAM);
    let sums: Vec<(f64, f64)> = (0..streams)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, 0, Phase::Diagnostics, c as u64);
            let count = PER_STREAM.min(pairs - c * PER_STREAM);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let v = rng::normal3(&mut r) * test_theta.sqrt();
                let w = rng::normal3(&mut r) * theta_m.sqrt();
                let centre = (v + w) * 0.5;
                let q2 = (v - w).norm_sq();
                let c2 = centre.norm_sq();
                // Direction average of |v′|⁴ with v′ = V + |q|σ/2.
                let avg = (c2 + 0.25 * q2).powi(2) + q2 * c2 / 3.0;
                let x = 2.0 * q2.sqrt() * avg;
                s += x;
                s2 += x * x;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = pairs as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean) * n / (n - 1.0);
    Ok(GainConsistency {
        test_theta,
        kernel_value,
        direct_value: mean,
        direct_error: (var / n).sqrt(),
        relative_discrepancy: (kernel_value - mean) / mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::kernel_k;
    use crate::quadrature::SphereRule;
    use crate::velocity::Velocity;

    fn bath(e: f64) -> BathParams {
        BathParams::centered(1.0, e).unwrap()
    }

    #[test]
    fn gap_bound_values() {
        assert!((gap_lower_bound(&bath(1.0)) - 0.150_82).abs() < 1e-4);
        assert!((gap_lower_bound(&bath(0.5)) - 0.113_12).abs() < 1e-4);
    }

    #[test]
    fn radial_kernel_matches_sphere_quadrature() {
        let kp = KernelParams::calibrate(&bath(0.5)).unwrap();
        let rule = SphereRule::new(200, 64);
        for (r, rp) in [(0.7, 1.9), (2.0, 0.4), (1.0, 1.3)] {
            let (t, _) = radial_kernel(&kp, r, rp).unwrap();
            let v = Velocity::new(0.0, 0.0, r);
            let direct = 4.0 * PI * rule.average(Velocity::new(0.0, 0.0, 1.0), |w| kernel_k(&kp, v, w * rp).unwrap());
            assert!((t / direct - 1.0).abs() < 1e-6, "{r} {rp}: {t} vs {direct}");
        }
        let (t0, _) = radial_kernel(&kp, 1e-7, 1.2).unwrap();
        let (t1, _) = radial_kernel(&kp, 0.0, 1.2).unwrap();
        assert!((t0 / t1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn relative_speed_angular_average() {
        let rule = SphereRule::new(200, 64);
        let (r, rp) = (0.8, 1.5);
        let v = Velocity::new(0.0, 0.0, r);
        let direct = 4.0 * PI * rule.average(Velocity::new(0.0, 0.0, 1.0), |w| (v - w * rp).norm());
        assert!((radial_relative_speed(r, rp) / direct - 1.0).abs() < 1e-8);
        assert!((radial_relative_speed(0.0, rp) - 4.0 * PI * rp).abs() < 1e-12);
    }

    #[test]
    fn reduced_table_keeps_detailed_balance() {
        let b = bath(0.5);
        let kp = KernelParams::calibrate(&b).unwrap();
        let m = elastic_steady_state(&b);
        for (r, rp) in [(0.3, 2.1), (1.1, 1.7), (3.0, 0.5)] {
            let a = radial_kernel(&kp, r, rp).unwrap().0 * m.radial_density(rp);
            let c = radial_kernel(&kp, rp, r).unwrap().0 * m.radial_density(r);
            assert!((a / c - 1.0).abs() < 1e-10);
            assert!(a >= 0.0);
        }
    }

    #[test]
    fn l_has_maxwellian_null_vector_and_bounded_gap() {
        for e in [0.3, 1.0] {
            let b = bath(e);
            let op = discretize_l(&default_grid(&b).unwrap(), &b).unwrap();
            assert!(op.calibration.residual < RESIDUAL_TOL, "{:?}", op.calibration);
            assert!(op.calibration.bulk_column_defect < 1e-4, "{:?}", op.calibration);
            let g = spectral_gap(&op).unwrap();
            assert_eq!(g.null_count, 1);
            assert!(g.max_eigenvalue.abs() < 1e-10);
            assert!(g.gap >= gap_lower_bound(&b), "e = {e}: {} < {}", g.gap, gap_lower_bound(&b));
        }
    }

    #[test]
    fn linearized_operator_calibrates() {
        let b = bath(0.5);
        let op = discretize_linearized(&default_grid(&b).unwrap(), &b).unwrap();
        let cal = op.calibration;
        let (c1, reference) = (cal.c1.unwrap(), cal.c1_reference.unwrap());
        assert!((c1 / reference - 1.0).abs() < 1e-4, "{cal:?}");
        let g = spectral_gap(&op).unwrap();
        assert_eq!(g.null_count, 1);
        assert!(g.eigenvalues.iter().all(|&l| l < 1e-10));
        assert!(g.gap >= gap_lower_bound(&b));
    }

    #[test]
    fn mean_zero_solve_round_trip() {
        let b = bath(0.5);
        let op = discretize_linearized(&default_grid(&b).unwrap(), &b).unwrap();
        let m = &op.maxwellian;
        // f = (|v|² − 3Θ) M has zero mass.
        let f: Vec<f64> = op.grid.nodes.iter().map(|&r| (r * r - 3.0 * m.theta) * m.radial_density(r)).collect();
        assert!(op.integral(&f).abs() < 1e-12);
        let g = op.apply(&f).unwrap();
        let h = solve_mean_zero(&op, &g).unwrap();
        let err = op.norm(&h.iter().zip(&f).map(|(a, b)| a - b).collect::<Vec<_>>()) / op.norm(&f);
        assert!(err < 1e-8, "{err}");
        let back = op.apply(&h).unwrap();
        let res = op.norm(&back.iter().zip(&g).map(|(a, b)| a - b).collect::<Vec<_>>()) / op.norm(&g);
        assert!(res < 1e-8);
        let gap = spectral_gap(&op).unwrap().gap;
        assert!(op.norm(&h) <= op.norm(&g) / gap * (1.0 + 1e-9));
        assert!(solve_mean_zero(&op, &vec![0.0; op.len()]).unwrap().iter().all(|&x| x == 0.0));
        assert!(solve_mean_zero(&op, &vec![1.0; op.len()]).is_err());
    }

    #[test]
    fn gain_matches_boltzmann_gain() {
        let b = bath(0.5);
        let op = discretize_linearized(&default_grid(&b).unwrap(), &b).unwrap();
        let check = gain_consistency(&op, 0.9, 400_000, 1).unwrap();
        let tol = 4.0 * check.direct_error / check.direct_value;
        assert!(check.relative_discrepancy.abs() < tol, "{check:?}");
    }
}
