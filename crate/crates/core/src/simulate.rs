//! Monte Carlo paths for geometric Brownian motion and the Merton-Garman
//! stochastic-volatility model.
//!
//! Every path draws from its own ChaCha stream selected by the path index,
//! so an ensemble depends only on `(seed, n_paths, n_steps, params)` and not
//! on how paths are spread over worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::evolution::PayoffSpec;
use crate::params::MGParams;

/// Fraction of floored variance steps above which an ensemble is flagged.
pub const FLOOR_WARNING_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GbmStepping {
    #[default]
    Exact,
    /// Euler-Maruyama on `S` itself.
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum SdeModel {
    Gbm { sigma: f64, stepping: GbmStepping },
    Mg { v0: f64, params: MGParams },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SDEParams {
    pub model: SdeModel,
    /// Expected return; equal to `r` for risk-neutral runs.
    pub phi: f64,
    pub s0: f64,
}

impl SDEParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("phi", self.phi)?;
        if !(self.s0.is_finite() && self.s0 > 0.0) {
            return Err(Error::Parameter(format!("S0 must be positive, got {}", self.s0)));
        }
        match self.model {
            SdeModel::Gbm { sigma, .. } => {
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::Parameter(format!("sigma must be non-negative, got {sigma}")));
                }
            }
            SdeModel::Mg { v0, params } => {
                if !(v0.is_finite() && v0 > 0.0) {
                    return Err(Error::Parameter(format!("V0 must be positive, got {v0}")));
                }
                params.validate()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub s0: f64,
    pub phi: f64,
    pub terminal_s: Vec<f64>,
    /// Floored terminal variance (MG only).
    pub terminal_v: Option<Vec<f64>>,
    /// Pearson correlation of the two generated Brownian increments (MG only).
    pub realized_noise_correlation: Option<f64>,
    /// Steps whose raw variance update went negative.
    pub floor_hits: u64,
    pub stability_warning: bool,
}

impl PathEnsemble {
    pub fn maturity(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// Per-path output: terminal values, floor hits and increment moments.
struct PathOutcome {
    s: f64,
    v: f64,
    floor_hits: u64,
    moments: [f64; 5],
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

pub fn simulate(params: &SDEParams, maturity: f64, n_steps: usize, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    params.validate()?;
    if !(maturity.is_finite() && maturity > 0.0) {
        return Err(Error::Parameter(format!("maturity must be positive, got {maturity}")));
    }
    if n_steps == 0 || n_paths == 0 {
        return Err(Error::Parameter("n_steps and n_paths must be at least 1".into()));
    }
    let dt = maturity / n_steps as f64;
    let sq = dt.sqrt();
    let phi = params.phi;
    let s0 = params.s0;

    let outcomes: Vec<PathOutcome> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(seed, path);
            match params.model {
                SdeModel::Gbm { sigma, stepping } => {
                    let s = match stepping {
                        GbmStepping::Exact => {
                            let drift = (phi - 0.5 * sigma * sigma) * dt;
                            let mut x = s0.ln();
                            for _ in 0..n_steps {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                x += drift + sigma * sq * z;
                            }
                            x.exp()
                        }
                        GbmStepping::Euler => {
                            let mut s = s0;
                            for _ in 0..n_steps {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                s += s * (phi * dt + sigma * sq * z);
                            }
                            s
                        }
                    };
                    PathOutcome { s, v: sigma * sigma, floor_hits: 0, moments: [0.0; 5] }
                }
                SdeModel::Mg { v0, params: p } => {
                    let rho_c = (1.0 - p.rho * p.rho).max(0.0).sqrt();
                    let mut x = s0.ln();
                    let mut v = v0;
                    let mut hits = 0u64;
                    let mut m = [0.0; 5];
                    for _ in 0..n_steps {
                        let z1: f64 = StandardNormal.sample(&mut rng);
                        let z2: f64 = StandardNormal.sample(&mut rng);
                        let w2 = p.rho * z1 + rho_c * z2;
                        m[0] += z1;
                        m[1] += w2;
                        m[2] += z1 * w2;
                        m[3] += z1 * z1;
                        m[4] += w2 * w2;
                        let vp = v.max(0.0);
                        let vol = vp.sqrt();
                        x += (phi - 0.5 * vp) * dt + vol * sq * z1;
                        v += (p.lambda + p.mu * vp) * dt + p.zeta * vp.powf(p.alpha) * sq * w2;
                        if v < 0.0 {
                            hits += 1;
                        }
                    }
                    PathOutcome { s: x.exp(), v: v.max(0.0), floor_hits: hits, moments: m }
                }
            }
        })
        .collect();

    let mut terminal_s = Vec::with_capacity(n_paths);
    let mut terminal_v = Vec::with_capacity(n_paths);
    let mut floor_hits = 0u64;
    let mut m = [0.0f64; 5];
    for o in &outcomes {
        terminal_s.push(o.s);
        terminal_v.push(o.v);
        floor_hits += o.floor_hits;
        for (acc, v) in m.iter_mut().zip(&o.moments) {
            *acc += v;
        }
    }
    if let Some(pos) = terminal_s.iter().position(|s| !s.is_finite()) {
        return Err(Error::NumericalFailure { step: n_steps, reason: format!("path {pos} produced a non-finite price") });
    }
    let is_mg = matches!(params.model, SdeModel::Mg { .. });
    let realized = is_mg.then(|| {
        let n = (n_paths * n_steps) as f64;
        let (ma, mb) = (m[0] / n, m[1] / n);
        let cov = m[2] / n - ma * mb;
        let va = m[3] / n - ma * ma;
        let vb = m[4] / n - mb * mb;
        cov / (va * vb).sqrt()
    });
    let total_steps = (n_paths * n_steps) as f64;
    Ok(PathEnsemble {
        n_paths,
        n_steps,
        dt,
        seed,
        s0,
        phi,
        terminal_s,
        terminal_v: is_mg.then_some(terminal_v),
        realized_noise_correlation: realized,
        floor_hits,
        stability_warning: floor_hits as f64 > FLOOR_WARNING_FRACTION * total_steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleStat {
    pub discounted_mean: f64,
    pub std_error: f64,
    pub z_score: f64,
    /// The ensemble drifts at `phi != r`, so the test is informational and
    /// expected to fail.
    pub expected_fail: bool,
}

fn mean_and_error(values: impl Iterator<Item = f64>, n: usize) -> (f64, f64) {
    let vals: Vec<f64> = values.collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Compares the mean discounted terminal price with `S0`.
pub fn martingale_test(e: &PathEnsemble, r: f64, maturity: f64) -> MartingaleStat {
    let disc = (-r * maturity).exp();
    let (mean, se) = mean_and_error(e.terminal_s.iter().map(|s| disc * s), e.n_paths);
    let diff = mean - e.s0;
    let z = if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 * e.s0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    MartingaleStat { discounted_mean: mean, std_error: se, z_score: z, expected_fail: e.phi != r }
}

/// Discounted mean payoff and its standard error.
pub fn mc_price(e: &PathEnsemble, payoff: &PayoffSpec, r: f64, maturity: f64) -> (f64, f64) {
    let disc = (-r * maturity).exp();
    mean_and_error(e.terminal_s.iter().map(|s| disc * payoff.value_at_spot(*s)), e.n_paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gbm(sigma: f64, phi: f64) -> SDEParams {
        SDEParams { model: SdeModel::Gbm { sigma, stepping: GbmStepping::Exact }, phi, s0: 100.0 }
    }

    #[test]
    fn zero_volatility_is_deterministic() {
        let e = simulate(&gbm(0.0, 0.05), 1.0, 10, 4, 1).unwrap();
        for s in &e.terminal_s {
            assert!((s - 100.0 * 0.05f64.exp()).abs() < 1e-12);
        }
        let st = martingale_test(&e, 0.05, 1.0);
        assert_eq!(st.z_score, 0.0);
        assert!(!st.expected_fail);
    }

    #[test]
    fn short_horizon_mean_is_spot() {
        let e = simulate(&gbm(0.2, 0.05), 1e-14, 1, 1000, 3).unwrap();
        let st = martingale_test(&e, 0.05, 1e-14);
        assert!((st.discounted_mean - 100.0).abs() < 1e-6);
    }

    #[test]
    fn drift_mismatch_flagged() {
        let e = simulate(&gbm(0.2, 0.10), 1.0, 1, 200_000, 9).unwrap();
        let st = martingale_test(&e, 0.05, 1.0);
        assert!(st.expected_fail);
        assert!(st.z_score > 3.0);
        assert!((st.discounted_mean / (100.0 * 0.05f64.exp()) - 1.0).abs() < 0.01);
    }

    #[test]
    fn zero_strike_call_is_forward() {
        let e = simulate(&gbm(0.2, 0.05), 1.0, 1, 100_000, 5).unwrap();
        let zero_strike = PayoffSpec::Call { strike: 0.0 };
        let (p, se) = mc_price(&e, &zero_strike, 0.05, 1.0);
        assert!((p - 100.0).abs() <= 3.0 * se);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let p = SDEParams {
            model: SdeModel::Mg { v0: 0.04, params: MGParams { r: 0.05, lambda: 0.02, mu: -0.5, zeta: 0.3, rho: -0.5, alpha: 1.0 } },
            phi: 0.05,
            s0: 100.0,
        };
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| simulate(&p, 1.0, 20, 500, 77).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn realized_correlation_tracks_rho() {
        for rho in [-0.5, 0.0, 0.7] {
            let p = SDEParams {
                model: SdeModel::Mg { v0: 0.04, params: MGParams { r: 0.05, lambda: 0.02, mu: -0.5, zeta: 0.3, rho, alpha: 1.0 } },
                phi: 0.05,
                s0: 100.0,
            };
            let e = simulate(&p, 1.0, 50, 2000, 11).unwrap();
            assert!((e.realized_noise_correlation.unwrap() - rho).abs() < 0.02);
        }
    }

    #[test]
    fn floor_hits_raise_warning() {
        let p = SDEParams {
            model: SdeModel::Mg { v0: 0.01, params: MGParams { r: 0.0, lambda: -0.5, mu: 0.0, zeta: 0.1, rho: 0.0, alpha: 1.0 } },
            phi: 0.0,
            s0: 100.0,
        };
        let e = simulate(&p, 1.0, 100, 50, 1).unwrap();
        assert!(e.floor_hits > 0);
        assert!(e.stability_warning);
        assert!(e.terminal_v.unwrap().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn euler_stepping_is_close_to_exact() {
        let euler = SDEParams { model: SdeModel::Gbm { sigma: 0.2, stepping: GbmStepping::Euler }, ..gbm(0.2, 0.05) };
        let e = simulate(&euler, 1.0, 100, 20_000, 4).unwrap();
        let st = martingale_test(&e, 0.05, 1.0);
        assert!(st.z_score.abs() < 4.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(simulate(&gbm(0.2, 0.05), 0.0, 1, 1, 0).is_err());
        assert!(simulate(&gbm(0.2, 0.05), 1.0, 0, 1, 0).is_err());
        assert!(simulate(&SDEParams { s0: -1.0, ..gbm(0.2, 0.05) }, 1.0, 1, 1, 0).is_err());
    }
}
