//! LU factorization of banded matrices without pivoting.
//!
//! The time-stepping matrices `I + c H` are diagonally dominant for the
//! step sizes used in pricing, so Doolittle elimination inside the band is
//! stable and keeps the fill confined to the original band.

use crate::error::{Error, Result};
use crate::operators::OperatorMatrix;

/// Row-major band storage: row `i` holds columns `i - lower ..= i + upper`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedLu {
    /// Factors `m`; on a vanishing pivot returns the row where it occurred.
    pub fn factor(m: &OperatorMatrix) -> std::result::Result<Self, (usize, String)> {
        let n = m.dimension();
        let (lower, upper) = m.nonzero_extent();
        let width = lower + upper + 1;
        let mut data = vec![0.0; n * width];
        let dense = |data: &mut Vec<f64>, i: usize, j: usize, v: f64| {
            data[i * width + (j + lower - i)] = v;
        };
        for &o in m.offsets() {
            if o < -(lower as isize) || o > upper as isize {
                continue;
            }
            let rows = if o >= 0 { 0..n.saturating_sub(o as usize) } else { o.unsigned_abs()..n };
            for i in rows {
                let j = (i as isize + o) as usize;
                dense(&mut data, i, j, m.get(i, j));
            }
        }

        for k in 0..n {
            let pivot = data[k * width + lower];
            if !pivot.is_finite() || pivot.abs() < 1e-300 {
                return Err((k, format!("pivot {pivot:e} at row {k}")));
            }
            let last_row = (k + lower).min(n - 1);
            let last_col = (k + upper).min(n - 1);
            let span = last_col - k;
            for i in k + 1..=last_row {
                let lik_pos = i * width + (k + lower - i);
                let l = data[lik_pos] / pivot;
                data[lik_pos] = l;
                if l == 0.0 {
                    continue;
                }
                let src = k * width + lower + 1;
                let dst = i * width + (k + 1 + lower - i);
                let (head, tail) = data.split_at_mut(dst);
                let pivot_row = &head[src..src + span];
                for (d, s) in tail[..span].iter_mut().zip(pivot_row) {
                    *d -= l * s;
                }
            }
        }
        Ok(Self { n, lower, upper, width, data })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Solves in place: `rhs` becomes the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<()> {
        if rhs.len() != self.n {
            return Err(Error::Dimension { expected: self.n, found: rhs.len() });
        }
        let (lo, w) = (self.lower, self.width);
        for i in 0..self.n {
            let start = i.saturating_sub(lo);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = rhs[i];
            for j in start..i {
                acc -= row[j + lo - i] * rhs[j];
            }
            rhs[i] = acc;
        }
        for i in (0..self.n).rev() {
            let end = (i + self.upper).min(self.n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = rhs[i];
            for j in i + 1..=end {
                acc -= row[j + lo - i] * rhs[j];
            }
            rhs[i] = acc / row[lo];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::operators::OperatorBuilder;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn solves_diagonally_dominant_band_systems(
            n in 3usize..40,
            lower in 0usize..4,
            upper in 0usize..4,
            seed_vals in prop::collection::vec(-1.0f64..1.0, 40 * 9),
            x in prop::collection::vec(-5.0f64..5.0, 40),
        ) {
            let mut b = OperatorBuilder::new(n);
            let mut k = 0;
            for i in 0..n {
                let mut off_sum = 0.0;
                for j in i.saturating_sub(lower)..=(i + upper).min(n - 1) {
                    if j != i {
                        let v = seed_vals[k % seed_vals.len()];
                        k += 1;
                        off_sum += v.abs();
                        b.add(i, j, v);
                    }
                }
                b.add(i, i, off_sum + 1.0);
            }
            let m = b.finish(GridSpec::new_1d(0.0, 1.0, n).unwrap(), 0, false);
            let mut rhs = vec![0.0; n];
            m.apply_slice(&x[..n], &mut rhs);
            let lu = BandedLu::factor(&m).unwrap();
            lu.solve_in_place(&mut rhs).unwrap();
            for (a, e) in rhs.iter().zip(&x[..n]) {
                prop_assert!((a - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_pivot_reports_row() {
        let mut b = OperatorBuilder::new(3);
        b.add(0, 0, 1.0);
        b.add(1, 1, 0.0);
        b.add(2, 2, 1.0);
        let m = b.finish(GridSpec::new_1d(0.0, 1.0, 3).unwrap(), 0, true);
        assert_eq!(BandedLu::factor(&m).unwrap_err().0, 1);
    }
}
