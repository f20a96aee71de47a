//! Potential terms: effective Black-Scholes Hamiltonians, their Hermitian
//! form under a diagonal similarity transform, and the quartic
//! symmetry-breaking potential.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{interp_table, GridSpec, ValueField};
use crate::operators::{assemble_1d, Closure, OperatorBuilder, OperatorMatrix};

/// Largest dimension for which dense eigenvalues are computed.
pub const DENSE_SPECTRUM_LIMIT: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialSpec {
    Constant { value: f64 },
    /// `(x, V(x))` pairs, strictly increasing in `x`, linearly interpolated.
    Table { points: Vec<(f64, f64)> },
    /// `V(S) = -mu2 S^2 + omega S^4`.
    Quartic { mu2: f64, omega: f64 },
}

#[derive(Debug, Deserialize)]
struct TableRow {
    x: f64,
    #[serde(alias = "V")]
    v: f64,
}

impl PotentialSpec {
    pub fn quartic(mu2: f64, omega: f64) -> Result<Self> {
        let q = Self::Quartic { mu2, omega };
        q.validate()?;
        Ok(q)
    }

    /// Reads a two-column CSV with a header row naming `x` and `V`.
    pub fn table_from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let mut points = Vec::new();
        for (line, row) in rdr.deserialize::<TableRow>().enumerate() {
            let row = row.map_err(|e| Error::Parameter(format!("potential table row {}: {e}", line + 1)))?;
            points.push((row.x, row.v));
        }
        let spec = Self::Table { points };
        spec.validate()?;
        Ok(spec)
    }

    pub fn table_from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Parameter(format!("cannot open potential table {}: {e}", path.display())))?;
        Self::table_from_csv(file)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::Parameter(format!("constant potential must be finite, got {value}")));
                }
            }
            Self::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::Parameter("potential table needs at least two rows".into()));
                }
                if points.iter().any(|(x, v)| !x.is_finite() || !v.is_finite()) {
                    return Err(Error::Parameter("potential table entries must be finite".into()));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::Parameter("potential table must be strictly increasing in x".into()));
                }
            }
            Self::Quartic { mu2, omega } => {
                if !(mu2.is_finite() && *mu2 > 0.0 && omega.is_finite() && *omega > 0.0) {
                    return Err(Error::Parameter(format!(
                        "quartic coefficients must be positive, got mu2 = {mu2}, omega = {omega}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Table { points } => interp_table(points, x),
            Self::Quartic { mu2, omega } => {
                let x2 = x * x;
                -mu2 * x2 + omega * x2 * x2
            }
        }
    }

    /// Values at every x node; tables must cover the grid.
    pub fn sample(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        self.validate()?;
        if let Self::Table { points } = self {
            let (lo, hi) = (points[0].0, points[points.len() - 1].0);
            if grid.x.min < lo || grid.x.max > hi {
                return Err(Error::Parameter(format!(
                    "potential table covers [{lo}, {hi}] but the grid spans [{}, {}]",
                    grid.x.min, grid.x.max
                )));
            }
        }
        Ok(grid.x.nodes().into_iter().map(|x| self.value(x)).collect())
    }

    /// `int_0^x V` by the trapezoid rule on the grid nodes; the segment from
    /// 0 to the first node is integrated exactly for the interpolant.
    fn integral_from_zero(&self, grid: &GridSpec, v: &[f64]) -> Vec<f64> {
        let nodes = grid.x.nodes();
        let h = grid.h_x();
        // Integral from 0 to the first node, then cumulative trapezoid.
        let x0 = nodes[0];
        let mut acc = self.segment_integral(0.0, x0);
        let mut out = Vec::with_capacity(nodes.len());
        out.push(acc);
        for i in 1..nodes.len() {
            acc += 0.5 * h * (v[i - 1] + v[i]);
            out.push(acc);
        }
        out
    }

    fn segment_integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Self::Constant { value } => value * (b - a),
            _ => {
                let m = 64;
                let h = (b - a) / m as f64;
                (0..m).map(|k| 0.5 * h * (self.value(a + k as f64 * h) + self.value(a + (k + 1) as f64 * h))).sum()
            }
        }
    }
}

/// `-(s^2/2) d2/dx2 + (s^2/2 - V(x)) d/dx + V(x)`.
pub fn build_effective_bs(grid: &GridSpec, sigma: f64, v: &PotentialSpec) -> Result<OperatorMatrix> {
    check_sigma(sigma)?;
    let pot = v.sample(grid)?;
    let half = 0.5 * sigma * sigma;
    let drift: Vec<f64> = pot.iter().map(|vi| half - vi).collect();
    assemble_1d(grid, half, &drift, &pot, Closure::ZeroFlux)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("sigma must be positive, got {sigma}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitizationResult {
    pub h_eff: OperatorMatrix,
    /// Symmetric tridiagonal matrix with `D(e^gauge) h_herm D(e^-gauge) = h_eff`.
    pub h_herm: OperatorMatrix,
    /// `s(x) = x/2 - (1/sigma^2) int_0^x V` (trapezoid rule).
    pub s_field: ValueField,
    /// Discrete gauge realizing the similarity exactly, anchored to
    /// `s_field` at the first node.
    pub gauge: ValueField,
    /// Constant-potential values `(s^2/2 - V)/s^2` and `(V + s^2/2)^2/(2 s^2)`.
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    /// Slope of `s_field` across the grid.
    pub alpha_by_conjugation: f64,
    /// Mean over the grid of the transformed potential
    /// `V'/2 + (V + s^2/2)^2/(2 s^2)`, with `V'` by central differences.
    pub gamma_by_conjugation: f64,
    pub transformed_potential: Vec<f64>,
    /// `||D(e^gauge) h_herm D(e^-gauge) - h_eff||_F / ||h_eff||_F`.
    pub similarity_residual: f64,
    /// Same measure for the operator assembled directly from the continuum
    /// Hermitian form with the trapezoid `s_field`.
    pub continuum_similarity_residual: f64,
    pub max_gauge_deviation: f64,
}

/// Symmetrizes the effective Hamiltonian by a diagonal similarity.
///
/// Requires every product of opposite off-diagonal entries to be positive,
/// i.e. a cell Peclet number `|s^2/2 - V| h / (s^2/2)` below 2.
pub fn hermitize(grid: &GridSpec, sigma: f64, v: &PotentialSpec) -> Result<HermitizationResult> {
    let h_eff = build_effective_bs(grid, sigma, v)?;
    let n = grid.n_x();
    let h = grid.h_x();
    let s2 = sigma * sigma;
    let pot = v.sample(grid)?;
    let nodes = grid.x.nodes();

    let integral = v.integral_from_zero(grid, &pot);
    let s: Vec<f64> = nodes.iter().zip(&integral).map(|(x, int)| 0.5 * x - int / s2).collect();

    let mut gauge = vec![s[0]; n];
    let mut b = OperatorBuilder::new(n);
    for i in 0..n {
        b.add(i, i, h_eff.get(i, i));
        if i + 1 < n {
            let (upper, lower) = (h_eff.get(i, i + 1), h_eff.get(i + 1, i));
            let prod = upper * lower;
            if !(prod > 0.0) {
                return Err(Error::Range(format!(
                    "drift dominates diffusion between nodes {i} and {}; refine the grid",
                    i + 1
                )));
            }
            let m = upper.signum() * prod.sqrt();
            b.add(i, i + 1, m);
            b.add(i + 1, i, m);
            gauge[i + 1] = gauge[i] + 0.5 * (lower / upper).ln();
        }
    }
    let h_herm = b.finish(*grid, h_eff.boundary_width(), true);

    let similarity_residual = conjugation_residual(&h_herm, &gauge, &h_eff)?;

    let mut transformed = vec![0.0; n];
    for i in 0..n {
        let dv = if i == 0 {
            (pot[1] - pot[0]) / h
        } else if i + 1 == n {
            (pot[n - 1] - pot[n - 2]) / h
        } else {
            (pot[i + 1] - pot[i - 1]) / (2.0 * h)
        };
        let shifted = pot[i] + 0.5 * s2;
        transformed[i] = 0.5 * dv + shifted * shifted / (2.0 * s2);
    }
    let continuum = assemble_1d(grid, 0.5 * s2, &vec![0.0; n], &transformed, Closure::ZeroFlux)?;
    let continuum_similarity_residual = conjugation_residual(&continuum, &s, &h_eff)?;

    let (alpha, gamma) = match v {
        PotentialSpec::Constant { value } => {
            let shifted = value + 0.5 * s2;
            (Some((0.5 * s2 - value) / s2), Some(shifted * shifted / (2.0 * s2)))
        }
        _ => (None, None),
    };
    let max_gauge_deviation = s.iter().zip(&gauge).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(HermitizationResult {
        alpha_by_conjugation: (s[n - 1] - s[0]) / (nodes[n - 1] - nodes[0]),
        gamma_by_conjugation: transformed.iter().sum::<f64>() / n as f64,
        transformed_potential: transformed,
        h_eff,
        h_herm,
        s_field: ValueField::new(s, "s(x)")?,
        gauge: ValueField::new(gauge, "discrete gauge")?,
        alpha,
        gamma,
        similarity_residual,
        continuum_similarity_residual,
        max_gauge_deviation,
    })
}

fn conjugation_residual(sym: &OperatorMatrix, s: &[f64], target: &OperatorMatrix) -> Result<f64> {
    let left: Vec<f64> = s.iter().map(|v| v.exp()).collect();
    let right: Vec<f64> = s.iter().map(|v| (-v).exp()).collect();
    if left.iter().chain(&right).any(|v| !v.is_finite() || *v == 0.0) {
        return Err(Error::Range("exp(+-s) leaves floating-point range; use a narrower grid".into()));
    }
    let conj = sym.conjugate_diagonal(&left, &right);
    let diff = conj.difference(target)?;
    Ok(diff.frobenius_norm() / target.frobenius_norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCheck {
    pub n: usize,
    /// `max |Im l| / max |l|` over the dense eigenvalues.
    pub max_relative_imaginary: f64,
    pub min_real: f64,
    pub max_real: f64,
}

/// Dense eigenvalues of an operator up to [`DENSE_SPECTRUM_LIMIT`].
pub fn spectrum_check(h: &OperatorMatrix) -> Result<SpectrumCheck> {
    let n = h.dimension();
    if n > DENSE_SPECTRUM_LIMIT {
        return Err(Error::Range(format!("dense spectrum limited to n <= {DENSE_SPECTRUM_LIMIT}, got {n}")));
    }
    let dense: DMatrix<f64> = h.to_dense();
    let eig = dense.complex_eigenvalues();
    let scale = eig.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let max_im = eig.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Ok(SpectrumCheck {
        n,
        max_relative_imaginary: max_im / scale,
        min_real: eig.iter().map(|z| z.re).fold(f64::INFINITY, f64::min),
        max_real: eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacuumManifold {
    pub magnitude: f64,
    pub representatives: Vec<f64>,
    pub multiplicity_note: String,
    /// `sqrt(mu2) / (sqrt(2) omega)`, which equals `magnitude` only at
    /// `omega = 1`.
    pub alternate_magnitude: f64,
}

/// Minimum set of `-mu2 S^2 + omega S^4` for a real field.
pub fn quartic_vacuum(q: &PotentialSpec) -> Result<VacuumManifold> {
    let PotentialSpec::Quartic { mu2, omega } = *q else {
        return Err(Error::Parameter("quartic vacuum needs a quartic potential".into()));
    };
    q.validate()?;
    let magnitude = (mu2 / (2.0 * omega)).sqrt();
    Ok(VacuumManifold {
        magnitude,
        representatives: vec![magnitude, -magnitude],
        multiplicity_note: "minimum fixes |S| only; the sign (a phase for a complex field) is arbitrary".into(),
        alternate_magnitude: mu2.sqrt() / (std::f64::consts::SQRT_2 * omega),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FlatnessProfile {
    /// `f = magnitude` everywhere.
    Constant,
    /// `f = magnitude + window * exp(-(x - x_mid)^2 / (2 width^2))`.
    GaussianBump { width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub magnitude: f64,
    pub window: f64,
    pub profile: FlatnessProfile,
    /// Interior `||H f||_2`.
    pub kinetic_norm: f64,
    /// Interior `||V(f)||_2`.
    pub potential_norm: f64,
    pub ratio: f64,
}

/// Compares the operator's action on a field held near the vacuum with the
/// quartic potential evaluated on that field.
pub fn quartic_flatness_report(
    q: &PotentialSpec,
    h_base: &OperatorMatrix,
    window: f64,
    profile: FlatnessProfile,
) -> Result<FlatnessReport> {
    let manifold = quartic_vacuum(q)?;
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::Parameter(format!("window must be positive, got {window}")));
    }
    let grid = *h_base.grid();
    let m = manifold.magnitude;
    let mid = 0.5 * (grid.x.min + grid.x.max);
    let f = match profile {
        FlatnessProfile::Constant => ValueField::from_fn(&grid, "vacuum", |_, _| m)?,
        FlatnessProfile::GaussianBump { width } => {
            if !(width.is_finite() && width > 0.0) {
                return Err(Error::Parameter(format!("bump width must be positive, got {width}")));
            }
            ValueField::from_fn(&grid, "vacuum bump", |x, _| m + window * (-(x - mid).powi(2) / (2.0 * width * width)).exp())?
        }
    };
    let hf = h_base.apply(&f)?;
    let (mut kin, mut pot) = (0.0, 0.0);
    for idx in grid.interior_indices(h_base.boundary_width()) {
        kin += hf.values[idx] * hf.values[idx];
        let v = q.value(f.values[idx]);
        pot += v * v;
    }
    let (kinetic_norm, potential_norm) = (kin.sqrt(), pot.sqrt());
    Ok(FlatnessReport { magnitude: m, window, profile, kinetic_norm, potential_norm, ratio: kinetic_norm / potential_norm })
}
