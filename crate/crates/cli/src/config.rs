//! TOML run configuration. Every section is optional and filled with
//! defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hamfin_core::evolution::{EvolutionConfig, OptionKind, Scheme};
use hamfin_core::simulate::GbmStepping;
use hamfin_core::{BSParams, MGParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Bs,
    Mg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub r: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub mu: f64,
    pub zeta: f64,
    pub rho: f64,
    pub alpha: f64,
    pub v0: f64,
    pub s0: f64,
    pub strike: f64,
    pub option: OptionKind,
    pub barrier_lower: Option<f64>,
    pub barrier_upper: Option<f64>,
    /// CSV with header `x,value` replacing the call/put payoff.
    pub payoff_table: Option<PathBuf>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::Bs,
            r: 0.05,
            sigma: 0.2,
            lambda: 0.0,
            mu: 0.0,
            zeta: 0.0,
            rho: 0.0,
            alpha: 1.0,
            v0: 0.04,
            s0: 100.0,
            strike: 100.0,
            option: OptionKind::Call,
            barrier_lower: None,
            barrier_upper: None,
            payoff_table: None,
        }
    }
}

impl ModelSection {
    pub fn bs(&self) -> BSParams {
        BSParams { r: self.r, sigma: self.sigma }
    }

    pub fn mg(&self) -> MGParams {
        MGParams { r: self.r, lambda: self.lambda, mu: self.mu, zeta: self.zeta, rho: self.rho, alpha: self.alpha }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub n_x: Option<usize>,
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
    pub n_y: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSection {
    pub maturity: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub smoothing: bool,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        Self { maturity: 1.0, n_steps: 512, scheme: Scheme::CrankNicolson, smoothing: true }
    }
}

impl EvolutionSection {
    pub fn config(&self) -> EvolutionConfig {
        EvolutionConfig { maturity: self.maturity, n_steps: self.n_steps, scheme: self.scheme, smoothing: self.smoothing }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Expected return; defaults to `r` (risk neutral).
    pub phi: Option<f64>,
    pub stepping: GbmStepping,
    pub rho_sweep: Vec<f64>,
    pub rho_sweep_paths: usize,
    pub rho_sweep_steps: usize,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            n_steps: 1,
            seed: 42,
            phi: None,
            stepping: GbmStepping::Exact,
            rho_sweep: vec![-0.5, 0.0, 0.7],
            rho_sweep_paths: 100_000,
            rho_sweep_steps: 250,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    #[default]
    Constant,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub tol: f64,
    /// Include the volatility sector in the vacuum classification and
    /// solve the two-field system.
    pub extended: bool,
    /// Log-variance at which MG vacuum quantities are evaluated.
    pub y: f64,
    pub refinements: Vec<usize>,
    pub sweep_r_min: Option<f64>,
    pub sweep_r_max: Option<f64>,
    pub sweep_r_count: Option<usize>,
    pub potential: PotentialKind,
    /// Constant potential value; defaults to `r`.
    pub potential_value: Option<f64>,
    pub potential_table: Option<PathBuf>,
    pub spectrum: bool,
    pub mu2: f64,
    pub omega: f64,
    pub window: f64,
    pub bump_widths: Vec<f64>,
    pub ssb_samples: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            extended: false,
            y: 0.0,
            refinements: Vec::new(),
            sweep_r_min: None,
            sweep_r_max: None,
            sweep_r_count: None,
            potential: PotentialKind::Constant,
            potential_value: None,
            potential_table: None,
            spectrum: true,
            mu2: 1.0,
            omega: 0.5,
            window: 0.1,
            bump_widths: vec![0.2, 0.4, 0.8],
            ssb_samples: 401,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub evolution: EvolutionSection,
    pub mc: McSection,
    pub analysis: AnalysisSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Relative table paths are taken relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.model.payoff_table, &mut self.analysis.potential_table].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, tol: Option<f64>) -> Result<()> {
        if let Some(s) = seed {
            self.mc.seed = s;
        }
        if let Some(t) = tol {
            if !(t.is_finite() && t >= 0.0) {
                bail!("--tol must be a non-negative number, got {t}");
            }
            self.analysis.tol = t;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("[model]\nvolatility = 0.2\n").is_err());
        assert!(toml::from_str::<RunConfig>("[extra]\n").is_err());
    }

    #[test]
    fn sections_parse() {
        let cfg: RunConfig = toml::from_str(
            "[model]\nkind = \"mg\"\nzeta = 0.3\noption = \"put\"\n[evolution]\nscheme = \"implicit-euler\"\n[mc]\nstepping = \"euler\"\n",
        )
        .unwrap();
        assert_eq!(cfg.model.kind, ModelKind::Mg);
        assert_eq!(cfg.model.option, OptionKind::Put);
        assert_eq!(cfg.evolution.scheme, Scheme::ImplicitEuler);
        assert_eq!(cfg.mc.stepping, GbmStepping::Euler);
    }
}
