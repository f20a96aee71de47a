//! Martingale states as zero modes of the pricing Hamiltonians, vacuum
//! fields, and the single/degenerate vacuum classification.

use serde::{Deserialize, Serialize};

use crate::convergence::observed_order;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ValueField};
use crate::operators::{build_bs_hamiltonian, hermiticity_defect, OperatorMatrix};
use crate::params::{BSParams, MGParams};

pub const DEFAULT_CLASSIFICATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub state_label: String,
    /// `max |H f|` over interior nodes divided by `max |f|` there.
    pub interior_residual_max: f64,
    /// Interior `||H f||_2 / ||f||_2`.
    pub interior_residual_l2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refinement_order: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint_residual: Option<f64>,
}

/// Norms of `H state` on the nodes at least `k` cells from every edge.
pub fn martingale_residual(h: &OperatorMatrix, state: &ValueField, k: usize) -> Result<MartingaleReport> {
    let hf = h.apply(state)?;
    let grid = h.grid();
    let (mut r_max, mut s_max, mut r_sq, mut s_sq) = (0.0f64, 0.0f64, 0.0, 0.0);
    for idx in grid.interior_indices(k) {
        let (r, s) = (hf.values[idx].abs(), state.values[idx].abs());
        r_max = r_max.max(r);
        s_max = s_max.max(s);
        r_sq += r * r;
        s_sq += s * s;
    }
    if s_max == 0.0 {
        return Err(Error::Grid(format!("state vanishes on the interior (k = {k})")));
    }
    Ok(MartingaleReport {
        state_label: state.label.clone(),
        interior_residual_max: r_max / s_max,
        interior_residual_l2: (r_sq / s_sq).sqrt(),
        refinement_order: None,
        constraint_residual: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub n_x: usize,
    pub n_y: usize,
    pub h_x: f64,
    pub interior_residual_max: f64,
    pub interior_residual_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub levels: Vec<RefinementLevel>,
    /// Report on the finest grid, carrying the fitted order when at least
    /// three levels were run.
    pub finest: MartingaleReport,
}

/// Residual of `state` under `build(grid)` on each grid, coarse to fine.
pub fn refinement_study(
    grids: &[GridSpec],
    build: &dyn Fn(&GridSpec) -> Result<OperatorMatrix>,
    state: &dyn Fn(f64, f64) -> f64,
    label: &str,
    k: usize,
) -> Result<RefinementStudy> {
    if grids.is_empty() {
        return Err(Error::Grid("refinement study needs at least one grid".into()));
    }
    let mut levels = Vec::with_capacity(grids.len());
    let mut finest = None;
    for g in grids {
        let h = build(g)?;
        let f = ValueField::from_fn(g, label, state)?;
        let rep = martingale_residual(&h, &f, k)?;
        levels.push(RefinementLevel {
            n_x: g.n_x(),
            n_y: g.n_y(),
            h_x: g.h_x(),
            interior_residual_max: rep.interior_residual_max,
            interior_residual_l2: rep.interior_residual_l2,
        });
        finest = Some(rep);
    }
    let mut finest = finest.expect("non-empty");
    if levels.len() >= 3 {
        let h: Vec<f64> = levels.iter().map(|l| l.h_x).collect();
        let e: Vec<f64> = levels.iter().map(|l| l.interior_residual_max).collect();
        finest.refinement_order = observed_order(&h, &e);
    }
    Ok(RefinementStudy { levels, finest })
}

/// Left side of the constraint that makes `e^{x+y}` a zero mode of the
/// Merton-Garman Hamiltonian: `lambda + e^y (mu + zeta^2/2 e^{2y(alpha-1)}
/// + rho zeta e^{y(alpha-1/2)})`.
pub fn extended_constraint_residual(p: &MGParams, y: f64) -> f64 {
    let z = p.zeta;
    p.lambda
        + y.exp()
            * (p.mu + 0.5 * z * z * (2.0 * y * (p.alpha - 1.0)).exp() + p.rho * z * (y * (p.alpha - 0.5)).exp())
}

/// Largest constraint violation over the y-rows of a grid.
pub fn max_constraint_residual(p: &MGParams, grid: &GridSpec) -> f64 {
    let ys = grid.y.map(|a| a.nodes()).unwrap_or_else(|| vec![0.0]);
    ys.into_iter().map(|y| extended_constraint_residual(p, y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// `r/sigma^2 - 1/2`, the sign attached to the martingale condition.
    PaperSign,
    /// Extremum of `-(sigma^2/2) phi^2 + (sigma^2/2 - r) phi`.
    StationaryPoint,
}

impl Convention {
    fn sign(self) -> f64 {
        match self {
            Self::PaperSign => 1.0,
            Self::StationaryPoint => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacuumFields {
    pub phi_x_vac: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_y_vac: Option<f64>,
    pub convention: Convention,
}

pub fn bs_vacuum_field(p: &BSParams, convention: Convention) -> VacuumFields {
    let s2 = p.sigma * p.sigma;
    VacuumFields { phi_x_vac: convention.sign() * (p.r / s2 - 0.5), phi_y_vac: None, convention }
}

/// One-field vacuum at log-variance `y`, where `e^y` plays the part of
/// `sigma^2`.
pub fn mg_vacuum_field(p: &MGParams, y: f64, convention: Convention) -> VacuumFields {
    VacuumFields { phi_x_vac: convention.sign() * (p.r * (-y).exp() - 0.5), phi_y_vac: None, convention }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacuumSystemSolution {
    pub fields: VacuumFields,
    pub determinant: f64,
    /// Back-substituted residuals of the two equations.
    pub residuals: [f64; 2],
}

/// The 2x2 linear system in `(phi_x, phi_y)` at fixed `y`:
/// `A [phi_x, phi_y] = b`.
fn vacuum_system(p: &MGParams, y: f64) -> ([[f64; 2]; 2], [f64; 2]) {
    let c = p.coefficients(y);
    let ey = y.exp();
    let m = c.cross_xy;
    let q = c.diffusion_yy;
    ([[ey, m], [m, 2.0 * q]], [-(p.r - 0.5 * ey), c.drift_y])
}

fn system_residuals(a: &[[f64; 2]; 2], b: &[f64; 2], u: [f64; 2]) -> [f64; 2] {
    [a[0][0] * u[0] + a[0][1] * u[1] - b[0], a[1][0] * u[0] + a[1][1] * u[1] - b[1]]
}

/// Solves the two-field vacuum conditions by elimination. The solution
/// follows the stationary-point sign; with `rho = 0` its `phi_x` is the
/// negative of the paper-sign one-field value.
pub fn solve_mg_vacuum_system(p: &MGParams, y: f64) -> Result<VacuumSystemSolution> {
    p.validate()?;
    if p.zeta == 0.0 {
        return Err(Error::DegenerateSystem(
            "zeta = 0 makes the two-field system singular; use the one-field vacuum instead".into(),
        ));
    }
    let (a, b) = vacuum_system(p, y);
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !det.is_finite() || a.iter().flatten().chain(&b).any(|v| !v.is_finite()) {
        return Err(Error::Range(format!("vacuum system coefficients overflow at y = {y}")));
    }
    if det == 0.0 {
        return Err(Error::DegenerateSystem(format!("vanishing determinant at y = {y}")));
    }
    let mut u = [(b[0] * a[1][1] - a[0][1] * b[1]) / det, (a[0][0] * b[1] - a[1][0] * b[0]) / det];
    // One refinement sweep removes most of the rounding left by elimination.
    let r = system_residuals(&a, &b, u);
    u[0] -= (r[0] * a[1][1] - a[0][1] * r[1]) / det;
    u[1] -= (a[0][0] * r[1] - a[1][0] * r[0]) / det;
    Ok(VacuumSystemSolution {
        fields: VacuumFields { phi_x_vac: u[0], phi_y_vac: Some(u[1]), convention: Convention::StationaryPoint },
        determinant: det,
        residuals: system_residuals(&a, &b, u),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VacuumClass {
    Single,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegeneracyReason {
    DriftNonzero,
    RhoNonzero,
    ZetaNonzero,
    ConstraintViolated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegeneracyClass {
    pub class: VacuumClass,
    pub reasons: Vec<DegeneracyReason>,
}

impl DegeneracyClass {
    fn from_reasons(reasons: Vec<DegeneracyReason>) -> Self {
        let class = if reasons.is_empty() { VacuumClass::Single } else { VacuumClass::Degenerate };
        Self { class, reasons }
    }

    pub fn is_single(&self) -> bool {
        self.class == VacuumClass::Single
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelPoint {
    Bs(BSParams),
    /// Merton-Garman at log-variance `y`; `extended` adds the volatility
    /// sector conditions.
    Mg { params: MGParams, y: f64, extended: bool },
}

pub fn classify_degeneracy(point: &ModelPoint, tol: f64) -> DegeneracyClass {
    let mut reasons = Vec::new();
    match *point {
        ModelPoint::Bs(p) => {
            if p.drift().abs() > tol {
                reasons.push(DegeneracyReason::DriftNonzero);
            }
        }
        ModelPoint::Mg { params: p, y, extended } => {
            let c = p.coefficients(y);
            if c.drift_x.abs() > tol {
                reasons.push(DegeneracyReason::DriftNonzero);
            }
            if extended {
                if c.drift_y.abs() > tol {
                    reasons.push(DegeneracyReason::ConstraintViolated);
                }
                if p.rho.abs() > tol {
                    reasons.push(DegeneracyReason::RhoNonzero);
                }
                if p.zeta > tol {
                    reasons.push(DegeneracyReason::ZetaNonzero);
                }
            }
        }
    }
    DegeneracyClass::from_reasons(reasons)
}

/// Minimum over interior nodes of `|d state/dx| / |state|` with central
/// differences. Values near 0 mean the state is annihilated by the
/// momentum; values bounded away from 0 mean it is not.
pub fn momentum_action_check(grid: &GridSpec, state: &ValueField) -> Result<f64> {
    state.check_grid(grid)?;
    if let Some(pos) = state.values.iter().position(|v| *v <= 0.0) {
        return Err(Error::Parameter(format!("state must be strictly positive, node {pos} is not")));
    }
    let ny = grid.n_y();
    let h = grid.h_x();
    let mut ratio = f64::INFINITY;
    for idx in grid.interior_indices(1) {
        let d = (state.values[idx + ny] - state.values[idx - ny]) / (2.0 * h);
        ratio = ratio.min(d.abs() / state.values[idx]);
    }
    Ok(ratio)
}

/// `phi_vac^n` and whether it lies in the grid's log-price range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultimeCheck {
    pub n: u32,
    pub s_vac: f64,
    pub within_grid: bool,
}

pub fn multime_check(phi_vac: f64, n: u32, grid: &GridSpec) -> MultimeCheck {
    let s_vac = phi_vac.powi(n as i32);
    MultimeCheck { n, s_vac, within_grid: s_vac >= grid.x.min && s_vac <= grid.x.max }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacuumReport {
    pub paper_sign: VacuumFields,
    pub stationary_point: VacuumFields,
    pub degeneracy: DegeneracyClass,
    pub hermiticity_defect: f64,
    pub martingale: MartingaleReport,
    pub multime: MultimeCheck,
}

/// Vacuum summary for a Black-Scholes parameter set on a 1D grid.
pub fn bs_vacuum_report(p: &BSParams, grid: &GridSpec, tol: f64) -> Result<VacuumReport> {
    let h = build_bs_hamiltonian(grid, p)?;
    let ex = ValueField::from_fn(grid, "e^x", |x, _| x.exp())?;
    let paper_sign = bs_vacuum_field(p, Convention::PaperSign);
    Ok(VacuumReport {
        paper_sign,
        stationary_point: bs_vacuum_field(p, Convention::StationaryPoint),
        degeneracy: classify_degeneracy(&ModelPoint::Bs(*p), tol),
        hermiticity_defect: hermiticity_defect(&h),
        martingale: martingale_residual(&h, &ex, h.boundary_width())?,
        multime: multime_check(paper_sign.phi_x_vac, 1, grid),
    })
}
