//! Backward evolution `C(tau) = exp(-tau H) g` of option values.
//!
//! Time runs in `tau = T - t`, from the terminal payoff at `tau = 0` to the
//! present at `tau = T`. Each step solves `(I + theta dtau H) u' = (I - (1 -
//! theta) dtau H) u` with a banded LU factorization that is computed once
//! per distinct step coefficient.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::banded::BandedLu;
use crate::convergence::observed_order;
use crate::error::{Error, Result};
use crate::grid::{interp_table, interp_uniform, Axis, GridSpec, ValueField};
use crate::operators::{build_bs_hamiltonian, build_mg_hamiltonian_with, Closure, OperatorMatrix};
use crate::params::{BSParams, MGParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptionKind {
    Call,
    Put,
}

/// Terminal payoff `g(x)` with `x = ln S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PayoffSpec {
    Call { strike: f64 },
    Put { strike: f64 },
    /// Piecewise-linear payoff through `(x, value)` pairs sorted by `x`.
    CustomTable { points: Vec<(f64, f64)> },
}

impl PayoffSpec {
    pub fn call(strike: f64) -> Result<Self> {
        check_strike(strike)?;
        Ok(Self::Call { strike })
    }

    pub fn put(strike: f64) -> Result<Self> {
        check_strike(strike)?;
        Ok(Self::Put { strike })
    }

    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Parameter("payoff table needs at least two rows".into()));
        }
        if points.iter().any(|(x, v)| !x.is_finite() || !v.is_finite()) {
            return Err(Error::Parameter("payoff table entries must be finite".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Parameter("payoff table must be strictly increasing in x".into()));
        }
        Ok(Self::CustomTable { points })
    }

    pub fn strike(&self) -> Option<f64> {
        match self {
            Self::Call { strike } | Self::Put { strike } => Some(*strike),
            Self::CustomTable { .. } => None,
        }
    }

    pub fn value_at_x(&self, x: f64) -> f64 {
        match self {
            Self::Call { strike } => (x.exp() - strike).max(0.0),
            Self::Put { strike } => (strike - x.exp()).max(0.0),
            Self::CustomTable { points } => interp_table(points, x),
        }
    }

    pub fn value_at_spot(&self, s: f64) -> f64 {
        match self {
            Self::Call { strike } => (s - strike).max(0.0),
            Self::Put { strike } => (strike - s).max(0.0),
            Self::CustomTable { points } => interp_table(points, s.ln()),
        }
    }

    /// The payoff sampled on every node (constant along `y`).
    pub fn terminal_field(&self, grid: &GridSpec) -> Result<ValueField> {
        if let Self::CustomTable { points } = self {
            let (lo, hi) = (points[0].0, points[points.len() - 1].0);
            if grid.x.min < lo || grid.x.max > hi {
                return Err(Error::Parameter(format!(
                    "payoff table covers [{lo}, {hi}] but the grid spans [{}, {}]",
                    grid.x.min, grid.x.max
                )));
            }
        }
        ValueField::from_fn(grid, "payoff", |x, _| self.value_at_x(x))
    }

    /// Far-field value `a e^{-r tau} + b e^x` where the payoff behaves like
    /// `a + b S` near the edge.
    fn edge_value(&self, x: f64, tau: f64, r: f64, upper: bool) -> f64 {
        let (a, b) = match self {
            Self::Call { strike } => {
                if upper {
                    (-strike, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Self::Put { strike } => {
                if upper {
                    (0.0, 0.0)
                } else {
                    (*strike, -1.0)
                }
            }
            Self::CustomTable { points } => {
                let (p0, p1) = if upper {
                    (points[points.len() - 2], points[points.len() - 1])
                } else {
                    (points[0], points[1])
                };
                let (s0, s1) = (p0.0.exp(), p1.0.exp());
                let b = (p1.1 - p0.1) / (s1 - s0);
                (p0.1 - b * s0, b)
            }
        };
        a * (-r * tau).exp() + b * x.exp()
    }
}

fn check_strike(strike: f64) -> Result<()> {
    if strike.is_finite() && strike > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("strike must be positive, got {strike}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    CrankNicolson,
    ImplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub maturity: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
    /// Replace the first two Crank-Nicolson steps with four implicit-Euler
    /// half steps (Rannacher start) to damp payoff kinks.
    pub smoothing: bool,
}

impl EvolutionConfig {
    pub fn crank_nicolson(maturity: f64, n_steps: usize) -> Self {
        Self { maturity, n_steps, scheme: Scheme::CrankNicolson, smoothing: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.maturity.is_finite() && self.maturity > 0.0) {
            return Err(Error::Parameter(format!("maturity must be positive, got {}", self.maturity)));
        }
        if self.n_steps == 0 {
            return Err(Error::Parameter("n_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// `(theta, dtau)` for every step in order.
    fn plan(&self) -> Vec<(f64, f64)> {
        let dt = self.maturity / self.n_steps as f64;
        match self.scheme {
            Scheme::ImplicitEuler => vec![(1.0, dt); self.n_steps],
            Scheme::CrankNicolson if !self.smoothing => vec![(0.5, dt); self.n_steps],
            Scheme::CrankNicolson => {
                let smoothed = self.n_steps.min(2);
                let mut plan = vec![(1.0, 0.5 * dt); 2 * smoothed];
                plan.extend(std::iter::repeat((0.5, dt)).take(self.n_steps - smoothed));
                plan
            }
        }
    }
}

/// Nodes held at prescribed values `value(node, tau)` during evolution.
pub struct DirichletRows<'a> {
    pub nodes: Vec<usize>,
    pub value: &'a dyn Fn(usize, f64) -> f64,
}

/// Evolves `terminal` under the operator's own edge closure.
pub fn evolve(h: &OperatorMatrix, terminal: &ValueField, cfg: &EvolutionConfig) -> Result<ValueField> {
    evolve_with(h, terminal, cfg, None)
}

pub fn evolve_with(
    h: &OperatorMatrix,
    terminal: &ValueField,
    cfg: &EvolutionConfig,
    dirichlet: Option<&DirichletRows<'_>>,
) -> Result<ValueField> {
    cfg.validate()?;
    let n = h.dimension();
    if terminal.len() != n {
        return Err(Error::Dimension { expected: n, found: terminal.len() });
    }
    let mut u = terminal.values.clone();
    let mut explicit = vec![0.0; n];
    let mut factors: HashMap<u64, BandedLu> = HashMap::new();
    let mut tau = 0.0;

    for (step, (theta, dtau)) in cfg.plan().into_iter().enumerate() {
        let implicit = theta * dtau;
        let key = implicit.to_bits();
        if !factors.contains_key(&key) {
            let mut lhs = h.affine(implicit, 1.0);
            if let Some(d) = dirichlet {
                for &node in &d.nodes {
                    lhs.set_identity_row(node);
                }
            }
            let lu = BandedLu::factor(&lhs).map_err(|(_, reason)| Error::NumericalFailure { step, reason })?;
            factors.insert(key, lu);
        }
        let explicit_weight = (1.0 - theta) * dtau;
        if explicit_weight != 0.0 {
            h.apply_slice(&u, &mut explicit);
            for (ui, hi) in u.iter_mut().zip(&explicit) {
                *ui -= explicit_weight * hi;
            }
        }
        tau += dtau;
        if let Some(d) = dirichlet {
            for &node in &d.nodes {
                u[node] = (d.value)(node, tau);
            }
        }
        factors[&key].solve_in_place(&mut u)?;
        if let Some(pos) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure { step, reason: format!("non-finite value at node {pos}") });
        }
    }
    ValueField::new(u, format!("exp(-T H) {}", terminal.label))
}

/// Supplies pricing Hamiltonians on arbitrary grids.
pub trait PricingModel {
    fn hamiltonian(&self, grid: &GridSpec) -> Result<OperatorMatrix>;
    /// Discount rate used by the far-field boundary values.
    fn rate(&self) -> f64;
    fn is_two_dimensional(&self) -> bool;
}

impl PricingModel for BSParams {
    fn hamiltonian(&self, grid: &GridSpec) -> Result<OperatorMatrix> {
        build_bs_hamiltonian(grid, self)
    }

    fn rate(&self) -> f64 {
        self.r
    }

    fn is_two_dimensional(&self) -> bool {
        false
    }
}

/// Merton-Garman pricing uses one-sided outflow rows on the volatility edges.
impl PricingModel for MGParams {
    fn hamiltonian(&self, grid: &GridSpec) -> Result<OperatorMatrix> {
        build_mg_hamiltonian_with(grid, self, Closure::OneSided)
    }

    fn rate(&self) -> f64 {
        self.r
    }

    fn is_two_dimensional(&self) -> bool {
        true
    }
}

/// A spot `S`, plus the variance `V` for two-dimensional models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotQuery {
    pub spot: f64,
    pub variance: Option<f64>,
}

impl SpotQuery {
    pub fn spot(spot: f64) -> Self {
        Self { spot, variance: None }
    }

    pub fn with_variance(spot: f64, variance: f64) -> Self {
        Self { spot, variance: Some(variance) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotPrice {
    pub spot: f64,
    pub variance: Option<f64>,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingDiagnostics {
    pub scheme: Scheme,
    pub steps: usize,
    pub grid: GridSpec,
    /// Observed order of the martingale residual of the pricing operator on
    /// this grid and two coarsenings.
    pub residual_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingResult {
    pub field: ValueField,
    pub price_at: Vec<SpotPrice>,
    pub diagnostics: PricingDiagnostics,
}

impl PricingResult {
    /// Price at a single spot, using linear (bilinear in 2D) interpolation.
    pub fn price(&self, q: SpotQuery) -> Result<f64> {
        interpolate(&self.diagnostics.grid, &self.field.values, q)
    }
}

fn interpolate(grid: &GridSpec, values: &[f64], q: SpotQuery) -> Result<f64> {
    if !(q.spot.is_finite() && q.spot > 0.0) {
        return Err(Error::Parameter(format!("spot must be positive, got {}", q.spot)));
    }
    let x = q.spot.ln();
    if x < grid.x.min || x > grid.x.max {
        return Err(Error::Parameter(format!("spot {} lies outside the grid", q.spot)));
    }
    match grid.y {
        None => Ok(interp_uniform(&grid.x, values, x)),
        Some(ya) => {
            let v = q.variance.ok_or_else(|| Error::Parameter("two-dimensional price needs a variance".into()))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("variance must be positive, got {v}")));
            }
            let y = v.ln();
            if ya.n > 1 && (y < ya.min || y > ya.max) {
                return Err(Error::Parameter(format!("variance {v} lies outside the grid")));
            }
            let column: Vec<f64> = (0..grid.n_x())
                .map(|i| interp_uniform(&ya, &values[grid.index(i, 0)..grid.index(i, 0) + ya.n], y))
                .collect();
            Ok(interp_uniform(&grid.x, &column, x))
        }
    }
}

/// Standard lognormal (Black-Scholes) price of a European option.
pub fn bs_closed_form(s0: f64, strike: f64, r: f64, sigma: f64, maturity: f64, kind: OptionKind) -> f64 {
    let discount = (-r * maturity).exp();
    let vol = sigma * maturity.sqrt();
    if vol <= 0.0 || !vol.is_finite() {
        let forward_gap = s0 - strike * discount;
        return match kind {
            OptionKind::Call => forward_gap.max(0.0),
            OptionKind::Put => (-forward_gap).max(0.0),
        };
    }
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let d1 = ((s0 / strike).ln() + (r + 0.5 * sigma * sigma) * maturity) / vol;
    let d2 = d1 - vol;
    match kind {
        OptionKind::Call => s0 * n.cdf(d1) - strike * discount * n.cdf(d2),
        OptionKind::Put => strike * discount * n.cdf(-d2) - s0 * n.cdf(-d1),
    }
}

/// Default log-price range `ln(S0) +- 8 sigma sqrt(T)`.
pub fn default_x_range(s0: f64, sigma: f64, maturity: f64) -> (f64, f64) {
    let c = s0.ln();
    let w = 8.0 * sigma * maturity.sqrt();
    (c - w, c + w)
}

/// Knock-out levels; `None` means no barrier on that side.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Barriers {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Prices a European payoff with optional knock-out barriers.
///
/// Active barriers become the edges of the computational domain, rebuilt
/// with the original spacing so each barrier sits exactly on a node where
/// the value is held at zero. Barriers beyond the grid are inactive and the
/// far-field payoff asymptote is used on that edge instead.
pub fn price_with_barriers(
    model: &dyn PricingModel,
    grid: &GridSpec,
    barriers: Barriers,
    payoff: &PayoffSpec,
    cfg: &EvolutionConfig,
    spots: &[SpotQuery],
) -> Result<PricingResult> {
    cfg.validate()?;
    if model.is_two_dimensional() != grid.is_2d() {
        return Err(Error::Grid("grid dimension does not match the model".into()));
    }
    let mut lo_edge = grid.x.min;
    let mut hi_edge = grid.x.max;
    let mut lo_active = false;
    let mut hi_active = false;
    if let Some(b) = barriers.lower {
        check_barrier(b)?;
        let xb = b.ln();
        if xb >= grid.x.max {
            return Err(Error::Parameter(format!("lower barrier {b} lies above the grid")));
        }
        if xb >= grid.x.min {
            lo_edge = xb;
            lo_active = true;
        }
    }
    if let Some(b) = barriers.upper {
        check_barrier(b)?;
        let xb = b.ln();
        if xb <= grid.x.min {
            return Err(Error::Parameter(format!("upper barrier {b} lies below the grid")));
        }
        if xb <= grid.x.max {
            hi_edge = xb;
            hi_active = true;
        }
    }
    if let (Some(lo), Some(hi)) = (barriers.lower, barriers.upper) {
        if lo >= hi {
            return Err(Error::Parameter(format!("barriers inverted: lower {lo} >= upper {hi}")));
        }
    }

    let work = if lo_active || hi_active {
        let n = (((hi_edge - lo_edge) / grid.h_x()).round() as usize + 1).max(5);
        GridSpec { x: Axis { min: lo_edge, max: hi_edge, n }, ..*grid }
    } else {
        *grid
    };

    let h = model.hamiltonian(&work)?;
    let mut terminal = payoff.terminal_field(&work)?;
    let (nx, ny) = (work.n_x(), work.n_y());
    let mut nodes = Vec::with_capacity(2 * ny);
    for j in 0..ny {
        nodes.push(work.index(0, j));
        nodes.push(work.index(nx - 1, j));
    }
    let r = model.rate();
    let (x_lo, x_hi) = (work.x.min, work.x.max);
    let boundary = |node: usize, tau: f64| -> f64 {
        let upper = work.split(node).0 + 1 == nx;
        if (upper && hi_active) || (!upper && lo_active) {
            0.0
        } else {
            payoff.edge_value(if upper { x_hi } else { x_lo }, tau, r, upper)
        }
    };
    for &node in &nodes {
        let upper = work.split(node).0 + 1 == nx;
        if (upper && hi_active) || (!upper && lo_active) {
            terminal.values[node] = 0.0;
        }
    }
    let rows = DirichletRows { nodes, value: &boundary };
    let field = evolve_with(&h, &terminal, cfg, Some(&rows))?;
    check_positivity(&terminal.values, &field.values, cfg.n_steps)?;

    let mut price_at = Vec::with_capacity(spots.len());
    for &q in spots {
        let knocked = barriers.lower.is_some_and(|b| lo_active && q.spot <= b)
            || barriers.upper.is_some_and(|b| hi_active && q.spot >= b);
        let price = if knocked { 0.0 } else { interpolate(&work, &field.values, q)? };
        price_at.push(SpotPrice { spot: q.spot, variance: q.variance, price });
    }
    let residual_order = martingale_residual_order(model, &work);
    Ok(PricingResult {
        field: ValueField { label: "option value at t = 0".into(), ..field },
        price_at,
        diagnostics: PricingDiagnostics { scheme: cfg.scheme, steps: cfg.n_steps, grid: work, residual_order },
    })
}

/// Relative undershoot tolerated before a non-negative payoff's evolved
/// field is declared unstable.
const POSITIVITY_SLACK: f64 = 1e-3;

fn check_positivity(terminal: &[f64], field: &[f64], steps: usize) -> Result<()> {
    if terminal.iter().any(|&v| v < 0.0) {
        return Ok(());
    }
    let scale = terminal.iter().chain(field).fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = field.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() || min < -POSITIVITY_SLACK * scale {
        return Err(Error::NumericalFailure {
            step: steps,
            reason: format!("evolved value {min:.3e} is negative for a non-negative payoff (scale {scale:.3e})"),
        });
    }
    Ok(())
}

fn check_barrier(b: f64) -> Result<()> {
    if b.is_finite() && b > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("barrier must be positive, got {b}")))
    }
}

/// Order of the interior residual of `H e^x` over the grid and its two
/// successive coarsenings (needs `n_x = 4m + 1`).
fn martingale_residual_order(model: &dyn PricingModel, grid: &GridSpec) -> Option<f64> {
    let mut spacings = Vec::new();
    let mut errors = Vec::new();
    let mut n = grid.n_x();
    for _ in 0..3 {
        if n < 9 {
            return None;
        }
        let g = GridSpec { x: Axis { n, ..grid.x }, ..*grid };
        let h = model.hamiltonian(&g).ok()?;
        let state = ValueField::from_fn(&g, "e^x", |x, _| x.exp()).ok()?;
        let report = crate::martingale::martingale_residual(&h, &state, h.boundary_width()).ok()?;
        spacings.push(g.h_x());
        errors.push(report.interior_residual_max);
        if (n - 1) % 2 != 0 {
            return None;
        }
        n = (n - 1) / 2 + 1;
    }
    observed_order(&spacings, &errors)
}

pub fn price_vanilla(
    model: &dyn PricingModel,
    grid: &GridSpec,
    payoff: &PayoffSpec,
    cfg: &EvolutionConfig,
    spots: &[SpotQuery],
) -> Result<PricingResult> {
    price_with_barriers(model, grid, Barriers::default(), payoff, cfg, spots)
}

/// Down-and-out: zero value at and below `barrier`, which must sit below
/// the strike.
pub fn price_down_and_out(
    model: &dyn PricingModel,
    grid: &GridSpec,
    barrier: f64,
    payoff: &PayoffSpec,
    cfg: &EvolutionConfig,
    spots: &[SpotQuery],
) -> Result<PricingResult> {
    if let Some(k) = payoff.strike() {
        if !(barrier < k) {
            return Err(Error::Parameter(format!("down-and-out barrier {barrier} must lie below the strike {k}")));
        }
    }
    price_with_barriers(model, grid, Barriers { lower: Some(barrier), upper: None }, payoff, cfg, spots)
}

pub fn price_double_knock_out(
    model: &dyn PricingModel,
    grid: &GridSpec,
    lower: f64,
    upper: f64,
    payoff: &PayoffSpec,
    cfg: &EvolutionConfig,
    spots: &[SpotQuery],
) -> Result<PricingResult> {
    if !(lower < upper) {
        return Err(Error::Parameter(format!("barriers inverted: lower {lower} >= upper {upper}")));
    }
    price_with_barriers(model, grid, Barriers { lower: Some(lower), upper: Some(upper) }, payoff, cfg, spots)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BS: BSParams = BSParams { r: 0.05, sigma: 0.2 };

    fn grid(n: usize) -> GridSpec {
        let (lo, hi) = default_x_range(100.0, 0.2, 1.0);
        GridSpec::new_1d(lo, hi, n).unwrap()
    }

    #[test]
    fn tiny_maturity_returns_payoff() {
        let g = grid(257);
        let h = build_bs_hamiltonian(&g, &BS).unwrap();
        let payoff = PayoffSpec::call(100.0).unwrap().terminal_field(&g).unwrap();
        let cfg = EvolutionConfig::crank_nicolson(1e-12, 1);
        let out = evolve(&h, &payoff, &cfg).unwrap();
        for (a, b) in out.values.iter().zip(&payoff.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_field_discounts_at_r() {
        let g = grid(201);
        let h = build_bs_hamiltonian(&g, &BS).unwrap();
        let one = ValueField::from_fn(&g, "1", |_, _| 1.0).unwrap();
        for scheme in [Scheme::CrankNicolson, Scheme::ImplicitEuler] {
            let cfg = EvolutionConfig { maturity: 1.0, n_steps: 400, scheme, smoothing: true };
            let out = evolve(&h, &one, &cfg).unwrap();
            let tol = if scheme == Scheme::CrankNicolson { 1e-6 } else { 1e-5 };
            for v in out.values {
                assert!((v - (-0.05f64).exp()).abs() < tol, "{scheme:?} {v}");
            }
        }
    }

    #[test]
    fn martingale_state_is_stationary_in_the_interior() {
        let g = GridSpec::new_1d(-4.0, 4.0, 801).unwrap();
        let h = build_bs_hamiltonian(&g, &BS).unwrap();
        let ex = ValueField::from_fn(&g, "e^x", |x, _| x.exp()).unwrap();
        let out = evolve(&h, &ex, &EvolutionConfig::crank_nicolson(1.0, 200)).unwrap();
        for i in 0..801 {
            let x = g.x.node(i);
            if x.abs() < 2.0 {
                let rel = (out.values[i] - x.exp()).abs() / x.exp();
                assert!(rel < 1e-4, "x={x} rel={rel}");
            }
        }
    }

    #[test]
    fn call_price_is_monotone_in_spot() {
        let g = grid(513);
        let res = price_vanilla(&BS, &g, &PayoffSpec::call(100.0).unwrap(), &EvolutionConfig::crank_nicolson(1.0, 100), &[])
            .unwrap();
        assert!(res.field.values.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn closed_form_limits() {
        let c = bs_closed_form(100.0, 100.0, 0.05, 0.2, 1.0, OptionKind::Call);
        assert!((c - 10.450583572185565).abs() < 1e-9);
        let zero_vol = bs_closed_form(110.0, 100.0, 0.0, 1e-12, 1.0, OptionKind::Call);
        assert!((zero_vol - 10.0).abs() < 1e-9);
        let deep = bs_closed_form(1_000_000.0, 100.0, 0.05, 0.2, 1.0, OptionKind::Call);
        assert!((deep - (1_000_000.0 - 100.0 * (-0.05f64).exp())).abs() < 1e-6);
        let p = bs_closed_form(100.0, 100.0, 0.05, 0.2, 1.0, OptionKind::Put);
        assert!((c - p - (100.0 - 100.0 * (-0.05f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn barrier_validation() {
        let g = grid(257);
        let cfg = EvolutionConfig::crank_nicolson(1.0, 50);
        let call = PayoffSpec::call(100.0).unwrap();
        assert!(price_down_and_out(&BS, &g, 120.0, &call, &cfg, &[]).is_err());
        assert!(price_down_and_out(&BS, &g, -1.0, &call, &cfg, &[]).is_err());
        assert!(price_double_knock_out(&BS, &g, 120.0, 80.0, &call, &cfg, &[]).is_err());
        assert!(price_double_knock_out(&BS, &g, 1e6, 2e6, &call, &cfg, &[]).is_err());
    }

    #[test]
    fn barrier_node_is_zero() {
        let g = grid(513);
        let cfg = EvolutionConfig::crank_nicolson(1.0, 100);
        let res = price_down_and_out(&BS, &g, 80.0, &PayoffSpec::call(100.0).unwrap(), &cfg, &[SpotQuery::spot(80.0)])
            .unwrap();
        assert_eq!(res.field.values[0], 0.0);
        assert_eq!(res.diagnostics.grid.x.min, 80f64.ln());
        assert_eq!(res.price_at[0].price, 0.0);
    }

    #[test]
    fn table_payoff_must_cover_grid() {
        let g = grid(65);
        let t = PayoffSpec::table(vec![(4.0, 0.0), (5.0, 1.0)]).unwrap();
        assert!(t.terminal_field(&g).is_err());
        assert!(PayoffSpec::table(vec![(1.0, 0.0), (0.0, 1.0)]).is_err());
        assert!(PayoffSpec::call(0.0).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let g = grid(65);
        let h = build_bs_hamiltonian(&g, &BS).unwrap();
        let f = ValueField::from_fn(&g, "1", |_, _| 1.0).unwrap();
        assert!(evolve(&h, &f, &EvolutionConfig::crank_nicolson(0.0, 10)).is_err());
        assert!(evolve(&h, &f, &EvolutionConfig::crank_nicolson(1.0, 0)).is_err());
    }

    #[test]
    fn singular_step_matrix_reports_step() {
        // H = -(2/dt) I makes I + (dt/2) H vanish on the first smoothing step.
        let g = GridSpec::new_1d(0.0, 1.0, 5).unwrap();
        let mut b = crate::operators::OperatorBuilder::new(5);
        for i in 0..5 {
            b.add(i, i, -4.0);
        }
        let h = b.finish(g, 0, true);
        let f = ValueField::from_fn(&g, "1", |_, _| 1.0).unwrap();
        let err = evolve(&h, &f, &EvolutionConfig::crank_nicolson(1.0, 2)).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { step: 0, .. }), "{err:?}");
    }
}
