//! Uniform grids in log-price `x = ln S` and log-variance `y = ln V`, and
//! the value fields that live on them.
//!
//! Two-dimensional grids are enumerated with `y` as the fast index, so the
//! node `(i, j)` sits at position `i * n_y + j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One uniformly spaced axis. `n == 1` denotes a frozen coordinate and
/// requires `min == max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        if self.n <= 1 {
            0.0
        } else {
            (self.max - self.min) / (self.n - 1) as f64
        }
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    fn validate(&self, name: &str, allow_frozen: bool) -> Result<()> {
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::Grid(format!("{name} bounds must be finite")));
        }
        if allow_frozen && self.n == 1 {
            if self.min != self.max {
                return Err(Error::Grid(format!(
                    "{name} axis with a single node needs min == max"
                )));
            }
            return Ok(());
        }
        if self.n < 3 {
            return Err(Error::Grid(format!("{name} axis needs at least 3 nodes, got {}", self.n)));
        }
        if self.min >= self.max {
            return Err(Error::Grid(format!(
                "{name} axis needs min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// Discretization of the log-price axis and, optionally, the log-variance axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: Axis,
    pub y: Option<Axis>,
}

impl GridSpec {
    pub fn new_1d(x_min: f64, x_max: f64, n_x: usize) -> Result<Self> {
        let grid = Self { x: Axis { min: x_min, max: x_max, n: n_x }, y: None };
        grid.x.validate("x", false)?;
        Ok(grid)
    }

    pub fn new_2d(x_min: f64, x_max: f64, n_x: usize, y_min: f64, y_max: f64, n_y: usize) -> Result<Self> {
        let grid = Self {
            x: Axis { min: x_min, max: x_max, n: n_x },
            y: Some(Axis { min: y_min, max: y_max, n: n_y }),
        };
        grid.x.validate("x", false)?;
        grid.y.as_ref().expect("set above").validate("y", true)?;
        Ok(grid)
    }

    /// A two-dimensional grid with a single log-variance row at `y`.
    pub fn with_fixed_y(x_min: f64, x_max: f64, n_x: usize, y: f64) -> Result<Self> {
        Self::new_2d(x_min, x_max, n_x, y, y, 1)
    }

    pub fn is_2d(&self) -> bool {
        self.y.is_some()
    }

    pub fn n_x(&self) -> usize {
        self.x.n
    }

    pub fn n_y(&self) -> usize {
        self.y.map_or(1, |a| a.n)
    }

    pub fn len(&self) -> usize {
        self.n_x() * self.n_y()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h_x(&self) -> f64 {
        self.x.spacing()
    }

    pub fn h_y(&self) -> f64 {
        self.y.map_or(0.0, |a| a.spacing())
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_y() + j
    }

    /// `(i, j)` for a flat index.
    #[inline]
    pub fn split(&self, k: usize) -> (usize, usize) {
        let ny = self.n_y();
        (k / ny, k % ny)
    }

    /// Coordinates `(x, y)` of a flat index; `y` is 0 on 1D grids.
    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.split(k);
        (self.x.node(i), self.y.map_or(0.0, |a| a.node(j)))
    }

    /// True when the node lies at least `k` cells away from every boundary
    /// of a non-frozen axis.
    pub fn is_interior(&self, idx: usize, k: usize) -> bool {
        let (i, j) = self.split(idx);
        let nx = self.n_x();
        if i < k || i + k >= nx {
            return false;
        }
        match self.y {
            Some(a) if a.n > 1 => j >= k && j + k < a.n,
            _ => true,
        }
    }

    pub fn interior_indices(&self, k: usize) -> Vec<usize> {
        (0..self.len()).filter(|&idx| self.is_interior(idx, k)).collect()
    }
}

/// Real values aligned with a grid's enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    pub values: Vec<f64>,
    pub label: String,
}

impl ValueField {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Range(format!("field entry {pos} is not finite")));
        }
        Ok(Self { values, label: label.into() })
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: &GridSpec, label: impl Into<String>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.coords(k);
                f(x, y)
            })
            .collect();
        Self::new(values, label)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.len() != grid.len() {
            return Err(Error::Dimension { expected: grid.len(), found: self.len() });
        }
        Ok(())
    }
}

/// Linear interpolation on a uniform axis; clamps outside the range.
pub(crate) fn interp_uniform(axis: &Axis, values: &[f64], x: f64) -> f64 {
    debug_assert_eq!(axis.n, values.len());
    if axis.n == 1 {
        return values[0];
    }
    if x <= axis.min {
        return values[0];
    }
    if x >= axis.max {
        return values[axis.n - 1];
    }
    let h = axis.spacing();
    let t = (x - axis.min) / h;
    let i = (t.floor() as usize).min(axis.n - 2);
    let w = t - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// Linear interpolation through sorted `(x, v)` pairs; clamps outside.
pub(crate) fn interp_table(table: &[(f64, f64)], x: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let pos = table.partition_point(|p| p.0 <= x);
    let (x0, v0) = table[pos - 1];
    let (x1, v1) = table[pos];
    if x1 == x0 {
        return v1;
    }
    v0 + (v1 - v0) * (x - x0) / (x1 - x0)
}
