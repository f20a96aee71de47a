use std::path::Path;

use anyhow::{bail, Context, Result};
use hamfin_core::evolution::{
    bs_closed_form, default_x_range, price_double_knock_out, price_down_and_out, price_vanilla, price_with_barriers,
    Barriers, OptionKind, PayoffSpec, PricingDiagnostics, PricingModel, SpotPrice, SpotQuery,
};
use hamfin_core::martingale::{
    bs_vacuum_report, classify_degeneracy, extended_constraint_residual, max_constraint_residual, mg_vacuum_field,
    refinement_study, solve_mg_vacuum_system, Convention, DegeneracyClass, ModelPoint, RefinementLevel, VacuumFields,
    VacuumReport, VacuumSystemSolution, MartingaleReport,
};
use hamfin_core::operators::{build_mg_hamiltonian, OperatorMatrix};
use hamfin_core::potentials::{
    hermitize, quartic_flatness_report, quartic_vacuum, spectrum_check, FlatnessProfile, FlatnessReport,
    PotentialSpec, SpectrumCheck, VacuumManifold, DENSE_SPECTRUM_LIMIT,
};
use hamfin_core::simulate::{martingale_test, mc_price, simulate, MartingaleStat, SDEParams, SdeModel};
use hamfin_core::{build_bs_hamiltonian, hermiticity_defect, GridSpec};
use serde::Serialize;

use crate::config::{ModelKind, PotentialKind, RunConfig};
use crate::exit::Failure;
use crate::output::OutputDir;

fn grid_1d(cfg: &RunConfig, x_min: f64, x_max: f64, n_x: usize) -> Result<GridSpec> {
    let g = &cfg.grid;
    Ok(GridSpec::new_1d(g.x_min.unwrap_or(x_min), g.x_max.unwrap_or(x_max), g.n_x.unwrap_or(n_x))?)
}

fn grid_2d(cfg: &RunConfig, x: (f64, f64, usize), y: (f64, f64, usize)) -> Result<GridSpec> {
    let g = &cfg.grid;
    Ok(GridSpec::new_2d(
        g.x_min.unwrap_or(x.0),
        g.x_max.unwrap_or(x.1),
        g.n_x.unwrap_or(x.2),
        g.y_min.unwrap_or(y.0),
        g.y_max.unwrap_or(y.1),
        g.n_y.unwrap_or(y.2),
    )?)
}

fn load_payoff_table(path: &Path) -> Result<PayoffSpec> {
    #[derive(serde::Deserialize)]
    struct Row {
        x: f64,
        value: f64,
    }
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening payoff table {}", path.display()))?;
    let mut points = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.with_context(|| format!("reading payoff table {}", path.display()))?;
        points.push((row.x, row.value));
    }
    Ok(PayoffSpec::table(points)?)
}

fn payoff(cfg: &RunConfig) -> Result<PayoffSpec> {
    let m = &cfg.model;
    Ok(match (&m.payoff_table, m.option) {
        (Some(p), _) => load_payoff_table(p)?,
        (None, OptionKind::Call) => PayoffSpec::call(m.strike)?,
        (None, OptionKind::Put) => PayoffSpec::put(m.strike)?,
    })
}

#[derive(Serialize)]
struct Oracle {
    kind: &'static str,
    value: f64,
    abs_rel_err: f64,
}

#[derive(Serialize)]
struct PriceReport<'a> {
    config: &'a RunConfig,
    model: ModelKind,
    price_at: Vec<SpotPrice>,
    diagnostics: PricingDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<Oracle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_abs_rel_err: Option<f64>,
}

#[derive(Serialize)]
struct PriceRow {
    #[serde(rename = "S")]
    s: f64,
    price: f64,
}

/// Down-and-out call with barrier below the strike by the reflection principle.
fn down_and_out_call(s: f64, k: f64, b: f64, r: f64, sigma: f64, t: f64) -> f64 {
    let nu = r - 0.5 * sigma * sigma;
    bs_closed_form(s, k, r, sigma, t, OptionKind::Call)
        - (b / s).powf(2.0 * nu / (sigma * sigma)) * bs_closed_form(b * b / s, k, r, sigma, t, OptionKind::Call)
}

pub fn price(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let m = &cfg.model;
    let ev = cfg.evolution.config();
    ev.validate()?;
    if let Some(b) = m.barrier_lower {
        if b >= m.s0 {
            return Err(Failure::config(format!("lower barrier {b} must lie below S0 = {}", m.s0)).into());
        }
    }
    if let Some(b) = m.barrier_upper {
        if b <= m.s0 {
            return Err(Failure::config(format!("upper barrier {b} must lie above S0 = {}", m.s0)).into());
        }
    }
    let payoff = payoff(cfg)?;
    let bs = m.bs();
    let mg = m.mg();
    let (model, grid, query): (&dyn PricingModel, GridSpec, SpotQuery) = match m.kind {
        ModelKind::Bs => {
            bs.validate()?;
            let (lo, hi) = default_x_range(m.s0, m.sigma, ev.maturity);
            (&bs, grid_1d(cfg, lo, hi, 2049)?, SpotQuery::spot(m.s0))
        }
        ModelKind::Mg => {
            mg.validate()?;
            if !(m.v0 > 0.0) {
                return Err(Failure::config(format!("v0 must be positive, got {}", m.v0)).into());
            }
            let (lo, hi) = default_x_range(m.s0, m.v0.sqrt(), ev.maturity);
            let y0 = m.v0.ln();
            (&mg, grid_2d(cfg, (lo, hi, 257), (y0 - 1.5, y0 + 1.5, 65))?, SpotQuery::with_variance(m.s0, m.v0))
        }
    };
    let res = match (m.barrier_lower, m.barrier_upper) {
        (None, None) => price_vanilla(model, &grid, &payoff, &ev, &[query])?,
        (Some(lo), None) => price_down_and_out(model, &grid, lo, &payoff, &ev, &[query])?,
        (Some(lo), Some(hi)) => price_double_knock_out(model, &grid, lo, hi, &payoff, &ev, &[query])?,
        (None, Some(hi)) => {
            price_with_barriers(model, &grid, Barriers { lower: None, upper: Some(hi) }, &payoff, &ev, &[query])?
        }
    };

    let work = res.diagnostics.grid;
    let mut rows = Vec::with_capacity(work.n_x());
    for x in work.x.nodes() {
        let s = x.exp();
        let q = SpotQuery { spot: s, variance: query.variance };
        rows.push(PriceRow { s, price: res.price(q)? });
    }

    let got = res.price_at[0].price;
    let oracle = match (m.kind, &payoff, m.barrier_lower, m.barrier_upper) {
        (ModelKind::Bs, PayoffSpec::Call { strike } | PayoffSpec::Put { strike }, None, None) => {
            Some(("closed-form", bs_closed_form(m.s0, *strike, m.r, m.sigma, ev.maturity, m.option)))
        }
        (ModelKind::Bs, PayoffSpec::Call { strike }, Some(b), None) if b < *strike => {
            Some(("reflection", down_and_out_call(m.s0, *strike, b, m.r, m.sigma, ev.maturity)))
        }
        _ => None,
    }
    .map(|(kind, value)| Oracle { kind, value, abs_rel_err: ((got - value) / value).abs() });

    out.csv("price.csv", &rows)?;
    out.json(
        "report.json",
        &PriceReport {
            config: cfg,
            model: m.kind,
            oracle_abs_rel_err: oracle.as_ref().map(|o| o.abs_rel_err),
            oracle,
            price_at: res.price_at,
            diagnostics: res.diagnostics,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct MartingaleOut<'a> {
    config: &'a RunConfig,
    model: ModelKind,
    levels: Vec<RefinementLevel>,
    report: MartingaleReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    constraint_satisfied: Option<bool>,
}

pub fn martingale(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let m = &cfg.model;
    let a = &cfg.analysis;
    let g = &cfg.grid;
    let refinements = match (a.refinements.is_empty(), m.kind) {
        (false, _) => a.refinements.clone(),
        (true, ModelKind::Bs) => vec![257, 513, 1025],
        (true, ModelKind::Mg) => vec![65, 129, 257],
    };
    if refinements.len() < 3 {
        return Err(Failure::config("martingale study needs at least three refinements").into());
    }
    let (study, constraint) = match m.kind {
        ModelKind::Bs => {
            let p = m.bs();
            p.validate()?;
            let grids = refinements
                .iter()
                .map(|&n| GridSpec::new_1d(g.x_min.unwrap_or(-4.0), g.x_max.unwrap_or(4.0), n))
                .collect::<hamfin_core::Result<Vec<_>>>()?;
            let build = |grid: &GridSpec| build_bs_hamiltonian(grid, &p);
            (refinement_study(&grids, &build, &|x, _| x.exp(), "e^x", 2)?, None)
        }
        ModelKind::Mg => {
            let p = m.mg();
            p.validate()?;
            let grids = refinements
                .iter()
                .map(|&n| {
                    GridSpec::new_2d(
                        g.x_min.unwrap_or(-2.0),
                        g.x_max.unwrap_or(2.0),
                        n,
                        g.y_min.unwrap_or(-3.0),
                        g.y_max.unwrap_or(0.0),
                        n,
                    )
                })
                .collect::<hamfin_core::Result<Vec<_>>>()?;
            let build = |grid: &GridSpec| -> hamfin_core::Result<OperatorMatrix> { build_mg_hamiltonian(grid, &p) };
            let study = refinement_study(&grids, &build, &|x, y| (x + y).exp(), "e^{x+y}", 2)?;
            let c = max_constraint_residual(&p, grids.last().expect("three grids"));
            (study, Some(c))
        }
    };
    let mut report = study.finest;
    report.constraint_residual = constraint;
    let satisfied = constraint.map(|c| c <= a.tol);
    if satisfied == Some(false) {
        report.refinement_order = None;
    }
    out.json(
        "martingale.json",
        &MartingaleOut { config: cfg, model: m.kind, levels: study.levels, report, constraint_satisfied: satisfied },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct MgVacuum {
    y: f64,
    paper_sign: VacuumFields,
    stationary_point: VacuumFields,
    degeneracy: DegeneracyClass,
    /// Defect of the Hamiltonian restricted to a single frozen `y` row.
    frozen_row_hermiticity_defect: f64,
    extended_constraint_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    system: Option<VacuumSystemSolution>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum VacuumBody {
    Bs(VacuumReport),
    Mg(MgVacuum),
}

#[derive(Serialize)]
struct VacuumOut<'a> {
    config: &'a RunConfig,
    model: ModelKind,
    convention_note: &'static str,
    vacuum: VacuumBody,
}

#[derive(Serialize)]
struct SweepRow {
    r: f64,
    phi_vac: f64,
    class: hamfin_core::martingale::VacuumClass,
}

pub fn vacuum(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let m = &cfg.model;
    let a = &cfg.analysis;
    let body = match m.kind {
        ModelKind::Bs => {
            let p = m.bs();
            p.validate()?;
            VacuumBody::Bs(bs_vacuum_report(&p, &grid_1d(cfg, -4.0, 4.0, 257)?, a.tol)?)
        }
        ModelKind::Mg => {
            let p = m.mg();
            p.validate()?;
            let system = if a.extended {
                match solve_mg_vacuum_system(&p, a.y) {
                    Ok(s) => Some(s),
                    Err(hamfin_core::Error::DegenerateSystem(msg)) => {
                        return Err(Failure::conflict(format!("extended vacuum system requested but {msg}")).into())
                    }
                    Err(e) => return Err(e.into()),
                }
            } else {
                None
            };
            let g = &cfg.grid;
            let row = GridSpec::with_fixed_y(g.x_min.unwrap_or(-4.0), g.x_max.unwrap_or(4.0), g.n_x.unwrap_or(257), a.y)?;
            VacuumBody::Mg(MgVacuum {
                y: a.y,
                paper_sign: mg_vacuum_field(&p, a.y, Convention::PaperSign),
                stationary_point: mg_vacuum_field(&p, a.y, Convention::StationaryPoint),
                degeneracy: classify_degeneracy(&ModelPoint::Mg { params: p, y: a.y, extended: a.extended }, a.tol),
                frozen_row_hermiticity_defect: hermiticity_defect(&build_mg_hamiltonian(&row, &p)?),
                extended_constraint_residual: extended_constraint_residual(&p, a.y),
                system,
            })
        }
    };

    if let Some(count) = a.sweep_r_count {
        let (lo, hi) = (a.sweep_r_min.unwrap_or(0.0), a.sweep_r_max.unwrap_or(0.1));
        if count < 2 || !(lo < hi) {
            return Err(Failure::config("sweep needs sweep_r_count >= 2 and sweep_r_min < sweep_r_max").into());
        }
        let rows: Vec<SweepRow> = (0..count)
            .map(|i| {
                let r = lo + (hi - lo) * i as f64 / (count - 1) as f64;
                let (phi, class) = match m.kind {
                    ModelKind::Bs => {
                        let p = hamfin_core::BSParams { r, ..m.bs() };
                        (
                            hamfin_core::martingale::bs_vacuum_field(&p, Convention::PaperSign).phi_x_vac,
                            classify_degeneracy(&ModelPoint::Bs(p), a.tol).class,
                        )
                    }
                    ModelKind::Mg => {
                        let p = hamfin_core::MGParams { r, ..m.mg() };
                        (
                            mg_vacuum_field(&p, a.y, Convention::PaperSign).phi_x_vac,
                            classify_degeneracy(&ModelPoint::Mg { params: p, y: a.y, extended: a.extended }, a.tol).class,
                        )
                    }
                };
                SweepRow { r, phi_vac: phi, class }
            })
            .collect();
        out.csv("vacuum_sweep.csv", &rows)?;
    }
    out.json(
        "vacuum.json",
        &VacuumOut {
            config: cfg,
            model: m.kind,
            convention_note: "paper-sign is r/sigma^2 - 1/2; stationary-point is the extremum of the quadratic and has the opposite sign",
            vacuum: body,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct HermitizeOut<'a> {
    config: &'a RunConfig,
    potential: PotentialSpec,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    alpha_by_conjugation: f64,
    gamma_by_conjugation: f64,
    similarity_residual: f64,
    continuum_similarity_residual: f64,
    max_gauge_deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectrum_hermitian: Option<SpectrumCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectrum_effective: Option<SpectrumCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_relative_imaginary: Option<f64>,
}

pub fn hermitize_cmd(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let m = &cfg.model;
    let a = &cfg.analysis;
    let potential = match a.potential {
        PotentialKind::Constant => PotentialSpec::Constant { value: a.potential_value.unwrap_or(m.r) },
        PotentialKind::Table => {
            let Some(path) = &a.potential_table else {
                bail!(Failure::config("potential = \"table\" needs analysis.potential_table"));
            };
            PotentialSpec::table_from_path(path)?
        }
    };
    let grid = grid_1d(cfg, -3.0, 3.0, 512)?;
    let res = hermitize(&grid, m.sigma, &potential)?;
    let (herm, eff) = if a.spectrum && grid.n_x() <= DENSE_SPECTRUM_LIMIT {
        (Some(spectrum_check(&res.h_herm)?), Some(spectrum_check(&res.h_eff)?))
    } else {
        (None, None)
    };
    out.json(
        "hermitize.json",
        &HermitizeOut {
            config: cfg,
            potential,
            n: grid.n_x(),
            alpha: res.alpha,
            gamma: res.gamma,
            alpha_by_conjugation: res.alpha_by_conjugation,
            gamma_by_conjugation: res.gamma_by_conjugation,
            similarity_residual: res.similarity_residual,
            continuum_similarity_residual: res.continuum_similarity_residual,
            max_gauge_deviation: res.max_gauge_deviation,
            max_relative_imaginary: herm.map(|s| s.max_relative_imaginary),
            spectrum_hermitian: herm,
            spectrum_effective: eff,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct McPrice {
    mc: f64,
    std_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
}

#[derive(Serialize)]
struct RhoRow {
    rho_in: f64,
    rho_realized: f64,
}

#[derive(Serialize)]
struct McOut<'a> {
    config: &'a RunConfig,
    model: ModelKind,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    phi: f64,
    martingale: MartingaleStat,
    #[serde(skip_serializing_if = "Option::is_none")]
    realized_noise_correlation: Option<f64>,
    floor_hits: u64,
    stability_warning: bool,
    price: McPrice,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho_sweep_max_abs_dev: Option<f64>,
}

pub fn simulate_cmd(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let m = &cfg.model;
    let mc = &cfg.mc;
    let maturity = cfg.evolution.maturity;
    let phi = mc.phi.unwrap_or(m.r);
    let model = match m.kind {
        ModelKind::Bs => SdeModel::Gbm { sigma: m.sigma, stepping: mc.stepping },
        ModelKind::Mg => SdeModel::Mg { v0: m.v0, params: m.mg() },
    };
    let params = SDEParams { model, phi, s0: m.s0 };
    let e = simulate(&params, maturity, mc.n_steps, mc.n_paths, mc.seed)?;
    let stat = martingale_test(&e, m.r, maturity);
    let (price, se) = mc_price(&e, &payoff(cfg)?, m.r, maturity);
    let closed = (m.kind == ModelKind::Bs && m.payoff_table.is_none() && phi == m.r)
        .then(|| bs_closed_form(m.s0, m.strike, m.r, m.sigma, maturity, m.option));

    let mut rows = Vec::with_capacity(mc.rho_sweep.len());
    for &rho in &mc.rho_sweep {
        let p = SDEParams { model: SdeModel::Mg { v0: m.v0, params: hamfin_core::MGParams { rho, ..m.mg() } }, phi, s0: m.s0 };
        let sweep = simulate(&p, maturity, mc.rho_sweep_steps, mc.rho_sweep_paths, mc.seed)?;
        let realized = sweep.realized_noise_correlation.expect("MG ensembles carry a correlation");
        rows.push(RhoRow { rho_in: rho, rho_realized: realized });
    }
    if !rows.is_empty() {
        out.csv("rho_sweep.csv", &rows)?;
    }
    out.json(
        "mc.json",
        &McOut {
            config: cfg,
            model: m.kind,
            n_paths: e.n_paths,
            n_steps: e.n_steps,
            seed: e.seed,
            phi,
            martingale: stat,
            realized_noise_correlation: e.realized_noise_correlation,
            floor_hits: e.floor_hits,
            stability_warning: e.stability_warning,
            price: McPrice { mc: price, std_error: se, closed_form: closed, delta: closed.map(|c| price - c) },
            rho_sweep_max_abs_dev: rows.iter().map(|r| (r.rho_realized - r.rho_in).abs()).reduce(f64::max),
        },
    )?;
    if e.stability_warning {
        return Err(Failure::numerical(format!(
            "variance floor hit on {} of {} steps (more than 1%)",
            e.floor_hits,
            e.n_paths * e.n_steps
        ))
        .into());
    }
    Ok(())
}

#[derive(Serialize)]
struct AlternateCheck {
    stationarity_magnitude: f64,
    printed_formula_magnitude: f64,
    agrees: bool,
    note: &'static str,
}

#[derive(Serialize)]
struct SsbOut<'a> {
    config: &'a RunConfig,
    mu2: f64,
    omega: f64,
    manifold: VacuumManifold,
    v_at_magnitude: f64,
    v_at_zero: f64,
    symmetry_broken: bool,
    alternate_magnitude_check: AlternateCheck,
    flatness: Vec<FlatnessReport>,
}

#[derive(Serialize)]
struct PotentialRow {
    #[serde(rename = "S")]
    s: f64,
    #[serde(rename = "V")]
    v: f64,
}

pub fn ssb(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let a = &cfg.analysis;
    let q = PotentialSpec::quartic(a.mu2, a.omega)?;
    let manifold = quartic_vacuum(&q)?;
    let mag = manifold.magnitude;
    let h_base = build_bs_hamiltonian(&grid_1d(cfg, -3.0, 3.0, 257)?, &cfg.model.bs())?;
    let mut flatness = vec![quartic_flatness_report(&q, &h_base, a.window, FlatnessProfile::Constant)?];
    for &width in &a.bump_widths {
        flatness.push(quartic_flatness_report(&q, &h_base, a.window, FlatnessProfile::GaussianBump { width })?);
    }
    if a.ssb_samples < 3 {
        return Err(Failure::config("ssb_samples must be at least 3").into());
    }
    let half = (2.0 * mag).max(1.0);
    let rows: Vec<PotentialRow> = (0..a.ssb_samples)
        .map(|i| {
            let s = -half + 2.0 * half * i as f64 / (a.ssb_samples - 1) as f64;
            PotentialRow { s, v: q.value(s) }
        })
        .collect();
    out.csv("potential.csv", &rows)?;
    let alt = manifold.alternate_magnitude;
    out.json(
        "ssb.json",
        &SsbOut {
            config: cfg,
            mu2: a.mu2,
            omega: a.omega,
            v_at_magnitude: q.value(mag),
            v_at_zero: q.value(0.0),
            symmetry_broken: q.value(mag) < q.value(0.0) && q.value(-mag) < q.value(0.0),
            alternate_magnitude_check: AlternateCheck {
                stationarity_magnitude: mag,
                printed_formula_magnitude: alt,
                agrees: (alt - mag).abs() <= 1e-12 * mag.max(1.0),
                note: "the alternate closed form |mu|/(sqrt(2) omega) matches the stationary point only when omega = 1",
            },
            manifold,
            flatness,
        },
    )?;
    Ok(())
}
