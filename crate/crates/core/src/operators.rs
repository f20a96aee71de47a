//! Discretized pricing Hamiltonians.
//!
//! Operators are stored by diagonal: every stored offset `o` carries a
//! vector `d` with `A[i, i + o] = d[i]`. A 1D operator with zero-flux edges
//! is tridiagonal; a 2D operator couples `(i, j)` to its eight neighbours,
//! which on the `y`-fast enumeration gives a bandwidth of `n_y + 1`
//! (`n_y + 2` once one-sided `y` stencils appear at the volatility edges).
//!
//! Two edge closures are available:
//!
//! * [`Closure::ZeroFlux`] closes the diffusion term with a finite-volume
//!   no-flux row and the drift with a first-order one-sided difference.
//!   Every row annihilates constants up to the zeroth-order term, and the
//!   matrix is exactly symmetric whenever all first-derivative coefficients
//!   vanish.
//! * [`Closure::OneSided`] uses second-order one-sided stencils on the edge
//!   rows. Along `y` the second derivative is dropped on the edge rows
//!   (outflow) and the first derivative is taken one-sided.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ValueField};
use crate::params::{BSParams, MGParams};

/// Cells next to each edge excluded from residual diagnostics.
pub const DEFAULT_BOUNDARY_WIDTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Closure {
    #[default]
    ZeroFlux,
    OneSided,
}

/// A real square matrix stored as a set of diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    n: usize,
    offsets: Vec<isize>,
    diagonals: Vec<Vec<f64>>,
    grid: GridSpec,
    boundary_width: usize,
    symmetric_by_construction: bool,
}

/// Accumulates entries before freezing them into an [`OperatorMatrix`].
#[derive(Debug, Clone)]
pub struct OperatorBuilder {
    n: usize,
    diagonals: BTreeMap<isize, Vec<f64>>,
}

impl OperatorBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, diagonals: BTreeMap::new() }
    }

    /// Adds `value` to entry `(row, col)`.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        assert!(row < self.n && col < self.n, "entry ({row}, {col}) outside {}x{}", self.n, self.n);
        let offset = col as isize - row as isize;
        let n = self.n;
        self.diagonals.entry(offset).or_insert_with(|| vec![0.0; n])[row] += value;
    }

    pub fn finish(self, grid: GridSpec, boundary_width: usize, symmetric_by_construction: bool) -> OperatorMatrix {
        let (offsets, diagonals) = self.diagonals.into_iter().unzip();
        OperatorMatrix {
            n: self.n,
            offsets,
            diagonals,
            grid,
            boundary_width,
            symmetric_by_construction,
        }
    }
}

impl OperatorMatrix {
    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn boundary_width(&self) -> usize {
        self.boundary_width
    }

    pub fn with_boundary_width(mut self, k: usize) -> Self {
        self.boundary_width = k;
        self
    }

    /// Largest `|j - i|` over stored diagonals.
    pub fn bandwidth(&self) -> usize {
        self.offsets.iter().map(|o| o.unsigned_abs()).max().unwrap_or(0)
    }

    /// `(lower, upper)` extent of the nonzero entries.
    pub fn nonzero_extent(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for (o, d) in self.offsets.iter().zip(&self.diagonals) {
            if d.iter().any(|&v| v != 0.0) {
                if *o < 0 {
                    lower = lower.max(o.unsigned_abs());
                } else {
                    upper = upper.max(*o as usize);
                }
            }
        }
        (lower, upper)
    }

    pub fn offsets(&self) -> &[isize] {
        &self.offsets
    }

    /// True when assembly guarantees `H == H^T`: no first-derivative term
    /// anywhere and no coupling coefficient that varies across the pair it
    /// couples.
    pub fn symmetric_by_construction(&self) -> bool {
        self.symmetric_by_construction
    }

    fn diagonal(&self, offset: isize) -> Option<&[f64]> {
        self.offsets.binary_search(&offset).ok().map(|k| self.diagonals[k].as_slice())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let offset = col as isize - row as isize;
        self.diagonal(offset).map_or(0.0, |d| d[row])
    }

    /// Valid row range for a diagonal at `offset`.
    fn rows(&self, offset: isize) -> std::ops::Range<usize> {
        if offset >= 0 {
            0..self.n.saturating_sub(offset as usize)
        } else {
            offset.unsigned_abs().min(self.n)..self.n
        }
    }

    /// Banded matrix-vector product on raw slices.
    pub fn apply_slice(&self, input: &[f64], out: &mut [f64]) {
        assert_eq!(input.len(), self.n);
        assert_eq!(out.len(), self.n);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (&o, d) in self.offsets.iter().zip(&self.diagonals) {
            for i in self.rows(o) {
                out[i] += d[i] * input[(i as isize + o) as usize];
            }
        }
    }

    pub fn apply(&self, field: &ValueField) -> Result<ValueField> {
        if field.len() != self.n {
            return Err(Error::Dimension { expected: self.n, found: field.len() });
        }
        let mut out = vec![0.0; self.n];
        self.apply_slice(&field.values, &mut out);
        ValueField::new(out, format!("H applied to {}", field.label))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.offsets
            .iter()
            .zip(&self.diagonals)
            .map(|(&o, d)| self.rows(o).map(|i| d[i] * d[i]).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// `||H - H^T||_F`.
    pub fn antisymmetric_norm(&self) -> f64 {
        let mut positive: Vec<usize> = self.offsets.iter().map(|o| o.unsigned_abs()).filter(|&o| o > 0).collect();
        positive.sort_unstable();
        positive.dedup();
        let mut sum = 0.0;
        for o in positive {
            let upper = self.diagonal(o as isize);
            let lower = self.diagonal(-(o as isize));
            for i in 0..self.n.saturating_sub(o) {
                let a_ij = upper.map_or(0.0, |d| d[i]);
                let a_ji = lower.map_or(0.0, |d| d[i + o]);
                let diff = a_ij - a_ji;
                sum += 2.0 * diff * diff;
            }
        }
        sum.sqrt()
    }

    /// `I * shift + H * scale`.
    pub fn affine(&self, scale: f64, shift: f64) -> OperatorMatrix {
        let mut out = self.clone();
        for d in &mut out.diagonals {
            d.iter_mut().for_each(|v| *v *= scale);
        }
        match out.offsets.binary_search(&0) {
            Ok(k) => out.diagonals[k].iter_mut().for_each(|v| *v += shift),
            Err(pos) => {
                out.offsets.insert(pos, 0);
                out.diagonals.insert(pos, vec![shift; self.n]);
            }
        }
        out.symmetric_by_construction = self.symmetric_by_construction;
        out
    }

    /// Replaces `row` with the identity row.
    pub fn set_identity_row(&mut self, row: usize) {
        for (&o, d) in self.offsets.iter().zip(self.diagonals.iter_mut()) {
            let col = row as isize + o;
            if col >= 0 && (col as usize) < self.n {
                d[row] = if o == 0 { 1.0 } else { 0.0 };
            }
        }
        if self.offsets.binary_search(&0).is_err() {
            let pos = self.offsets.partition_point(|&o| o < 0);
            let mut d = vec![0.0; self.n];
            d[row] = 1.0;
            self.offsets.insert(pos, 0);
            self.diagonals.insert(pos, d);
        }
        self.symmetric_by_construction = false;
    }

    /// `D(left) * H * D(right)` for diagonal scalings.
    pub fn conjugate_diagonal(&self, left: &[f64], right: &[f64]) -> OperatorMatrix {
        assert_eq!(left.len(), self.n);
        assert_eq!(right.len(), self.n);
        let mut out = self.clone();
        for (&o, d) in out.offsets.iter().zip(out.diagonals.iter_mut()) {
            let rows = if o >= 0 { 0..self.n.saturating_sub(o as usize) } else { o.unsigned_abs()..self.n };
            for i in rows {
                d[i] *= left[i] * right[(i as isize + o) as usize];
            }
        }
        out.symmetric_by_construction = false;
        out
    }

    /// Entrywise difference `self - other` as a new operator on self's grid.
    pub fn difference(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        if other.n != self.n {
            return Err(Error::Dimension { expected: self.n, found: other.n });
        }
        let mut b = OperatorBuilder::new(self.n);
        for m in [(self, 1.0), (other, -1.0)] {
            for (&o, d) in m.0.offsets.iter().zip(&m.0.diagonals) {
                for i in m.0.rows(o) {
                    b.add(i, (i as isize + o) as usize, m.1 * d[i]);
                }
            }
        }
        Ok(b.finish(self.grid, self.boundary_width, false))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (&o, d) in self.offsets.iter().zip(&self.diagonals) {
            for i in self.rows(o) {
                m[(i, (i as isize + o) as usize)] = d[i];
            }
        }
        m
    }
}

/// `||H - H^T||_F / max(1, ||H||_F)` under the unweighted grid inner product.
pub fn hermiticity_defect(h: &OperatorMatrix) -> f64 {
    h.antisymmetric_norm() / h.frobenius_norm().max(1.0)
}

pub fn apply(h: &OperatorMatrix, field: &ValueField) -> Result<ValueField> {
    h.apply(field)
}

/// First-derivative weights `(offset, weight)` at position `i` of `n`.
fn first_derivative_stencil(i: usize, n: usize, h: f64, one_sided: bool) -> Vec<(isize, f64)> {
    if i > 0 && i + 1 < n {
        vec![(-1, -0.5 / h), (1, 0.5 / h)]
    } else if !one_sided {
        if i == 0 {
            vec![(0, -1.0 / h), (1, 1.0 / h)]
        } else {
            vec![(-1, -1.0 / h), (0, 1.0 / h)]
        }
    } else if i == 0 {
        vec![(0, -1.5 / h), (1, 2.0 / h), (2, -0.5 / h)]
    } else {
        vec![(0, 1.5 / h), (-1, -2.0 / h), (-2, 0.5 / h)]
    }
}

/// Second-derivative weights at position `i` of `n`; `None` for the
/// zero-flux edge (handled as a flux row by the caller).
fn second_derivative_stencil(i: usize, n: usize, h: f64, one_sided: bool) -> Option<Vec<(isize, f64)>> {
    let h2 = h * h;
    if i > 0 && i + 1 < n {
        Some(vec![(-1, 1.0 / h2), (0, -2.0 / h2), (1, 1.0 / h2)])
    } else if !one_sided {
        None
    } else if i == 0 {
        Some(vec![(0, 2.0 / h2), (1, -5.0 / h2), (2, 4.0 / h2), (3, -1.0 / h2)])
    } else {
        Some(vec![(0, 2.0 / h2), (-1, -5.0 / h2), (-2, 4.0 / h2), (-3, -1.0 / h2)])
    }
}

/// Zero-flux second-derivative row: `(f_inner - f_edge) / h^2`.
fn flux_second_derivative(i: usize, h: f64) -> Vec<(isize, f64)> {
    let h2 = h * h;
    if i == 0 {
        vec![(0, -1.0 / h2), (1, 1.0 / h2)]
    } else {
        vec![(-1, 1.0 / h2), (0, -1.0 / h2)]
    }
}

fn check_one_sided(n: usize, closure: Closure) -> Result<()> {
    if closure == Closure::OneSided && n < 4 {
        return Err(Error::Grid(format!("one-sided edge stencils need at least 4 nodes per axis, got {n}")));
    }
    Ok(())
}

/// `-diffusion d2/dx2 + drift_i d/dx + potential_i` on a 1D grid.
pub(crate) fn assemble_1d(
    grid: &GridSpec,
    diffusion: f64,
    drift: &[f64],
    potential: &[f64],
    closure: Closure,
) -> Result<OperatorMatrix> {
    if grid.is_2d() {
        return Err(Error::Grid("expected a one-dimensional grid".into()));
    }
    let n = grid.n_x();
    check_one_sided(n, closure)?;
    let h = grid.h_x();
    let one_sided = closure == Closure::OneSided;
    let mut b = OperatorBuilder::new(n);
    for i in 0..n {
        let d2 = second_derivative_stencil(i, n, h, one_sided).unwrap_or_else(|| flux_second_derivative(i, h));
        for (o, w) in d2 {
            b.add(i, (i as isize + o) as usize, -diffusion * w);
        }
        if drift[i] != 0.0 {
            for (o, w) in first_derivative_stencil(i, n, h, one_sided) {
                b.add(i, (i as isize + o) as usize, drift[i] * w);
            }
        }
        b.add(i, i, potential[i]);
    }
    let symmetric = closure == Closure::ZeroFlux && drift.iter().all(|&c| c == 0.0);
    Ok(b.finish(*grid, DEFAULT_BOUNDARY_WIDTH, symmetric))
}

/// Black-Scholes Hamiltonian `-(s^2/2) d2/dx2 + (s^2/2 - r) d/dx + r`.
pub fn build_bs_hamiltonian(grid: &GridSpec, p: &BSParams) -> Result<OperatorMatrix> {
    build_bs_hamiltonian_with(grid, p, Closure::ZeroFlux)
}

pub fn build_bs_hamiltonian_with(grid: &GridSpec, p: &BSParams, closure: Closure) -> Result<OperatorMatrix> {
    p.validate()?;
    let n = grid.n_x();
    assemble_1d(grid, 0.5 * p.sigma * p.sigma, &vec![p.drift(); n], &vec![p.r; n], closure)
}

/// Merton-Garman Hamiltonian in `(x, y) = (ln S, ln V)` with coefficients
/// frozen at the nodes. A grid with a single `y` row drops every `y` term.
pub fn build_mg_hamiltonian(grid: &GridSpec, p: &MGParams) -> Result<OperatorMatrix> {
    build_mg_hamiltonian_with(grid, p, Closure::ZeroFlux)
}

pub fn build_mg_hamiltonian_with(grid: &GridSpec, p: &MGParams, closure: Closure) -> Result<OperatorMatrix> {
    p.validate()?;
    let y_axis = grid.y.ok_or_else(|| Error::Grid("expected a two-dimensional grid".into()))?;
    let (nx, ny) = (grid.n_x(), grid.n_y());
    check_one_sided(nx, closure)?;
    let (hx, hy) = (grid.h_x(), grid.h_y());
    let y_active = ny > 1;
    let one_sided = closure == Closure::OneSided;

    let coeffs: Vec<_> = (0..ny).map(|j| p.coefficients(y_axis.node(j))).collect();
    for c in &coeffs {
        for v in [c.diffusion_xx, c.drift_x, c.drift_y, c.cross_xy, c.diffusion_yy] {
            if !v.is_finite() {
                return Err(Error::Range("Hamiltonian coefficient overflowed on this y range".into()));
            }
        }
    }

    let mut b = OperatorBuilder::new(grid.len());
    for i in 0..nx {
        for j in 0..ny {
            let row = grid.index(i, j);
            let c = &coeffs[j];
            let at = |di: isize, dj: isize| grid.index((i as isize + di) as usize, (j as isize + dj) as usize);

            let d2x = second_derivative_stencil(i, nx, hx, one_sided).unwrap_or_else(|| flux_second_derivative(i, hx));
            for (o, w) in d2x {
                b.add(row, at(o, 0), -c.diffusion_xx * w);
            }
            if c.drift_x != 0.0 {
                for (o, w) in first_derivative_stencil(i, nx, hx, one_sided) {
                    b.add(row, at(o, 0), c.drift_x * w);
                }
            }
            b.add(row, row, p.r);

            if !y_active {
                continue;
            }
            let y_edge = j == 0 || j + 1 == ny;
            if c.drift_y != 0.0 {
                for (o, w) in first_derivative_stencil(j, ny, hy, one_sided) {
                    b.add(row, at(0, o), c.drift_y * w);
                }
            }
            if c.diffusion_yy != 0.0 {
                let d2y = if y_edge && one_sided {
                    None
                } else {
                    Some(
                        second_derivative_stencil(j, ny, hy, false)
                            .unwrap_or_else(|| flux_second_derivative(j, hy)),
                    )
                };
                for (o, w) in d2y.into_iter().flatten() {
                    b.add(row, at(0, o), -c.diffusion_yy * w);
                }
            }
            let x_edge = i == 0 || i + 1 == nx;
            if c.cross_xy != 0.0 && (one_sided || !(x_edge || y_edge)) {
                let sx = first_derivative_stencil(i, nx, hx, true);
                let sy = first_derivative_stencil(j, ny, hy, true);
                for &(ox, wx) in &sx {
                    for &(oy, wy) in &sy {
                        b.add(row, at(ox, oy), -c.cross_xy * wx * wy);
                    }
                }
            }
        }
    }

    let first_order_free = coeffs.iter().all(|c| c.drift_x == 0.0 && (!y_active || c.drift_y == 0.0));
    let coupling_constant = !y_active
        || (coeffs.iter().all(|c| c.cross_xy == 0.0)
            && coeffs.iter().all(|c| c.diffusion_yy == coeffs[0].diffusion_yy));
    let symmetric = closure == Closure::ZeroFlux && first_order_free && coupling_constant;
    Ok(b.finish(*grid, DEFAULT_BOUNDARY_WIDTH, symmetric))
}
