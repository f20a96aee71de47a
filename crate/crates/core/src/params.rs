//! Model parameter records.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Black-Scholes parameters: spot rate `r` and volatility `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BSParams {
    pub r: f64,
    pub sigma: f64,
}

impl BSParams {
    pub fn new(r: f64, sigma: f64) -> Result<Self> {
        let p = Self { r, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("r", self.r)?;
        ensure_finite("sigma", self.sigma)?;
        if self.sigma <= 0.0 {
            return Err(Error::Parameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Coefficient of the first-derivative term, `sigma^2/2 - r`.
    pub fn drift(&self) -> f64 {
        0.5 * self.sigma * self.sigma - self.r
    }
}

/// Merton-Garman parameters. `lambda` already carries the shift by the
/// market price of volatility risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MGParams {
    pub r: f64,
    pub lambda: f64,
    pub mu: f64,
    pub zeta: f64,
    pub rho: f64,
    pub alpha: f64,
}

impl MGParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r", self.r),
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("zeta", self.zeta),
            ("rho", self.rho),
            ("alpha", self.alpha),
        ] {
            ensure_finite(name, v)?;
        }
        if self.zeta < 0.0 {
            return Err(Error::Parameter(format!("zeta must be non-negative, got {}", self.zeta)));
        }
        if self.rho.abs() > 1.0 {
            return Err(Error::Parameter(format!("rho must lie in [-1, 1], got {}", self.rho)));
        }
        Ok(())
    }

    /// Pointwise coefficients of the Hamiltonian at log-variance `y`.
    pub fn coefficients(&self, y: f64) -> MgCoefficients {
        let ey = y.exp();
        let vol_sq = self.zeta * self.zeta * (2.0 * y * (self.alpha - 1.0)).exp();
        MgCoefficients {
            diffusion_xx: 0.5 * ey,
            drift_x: -(self.r - 0.5 * ey),
            drift_y: -(self.lambda * (-y).exp() + self.mu - 0.5 * vol_sq),
            cross_xy: self.rho * self.zeta * (y * (self.alpha - 0.5)).exp(),
            diffusion_yy: vol_sq,
        }
    }
}

/// Row coefficients, read as
/// `H = -diffusion_xx d2/dx2 + drift_x d/dx + drift_y d/dy
///      - cross_xy d2/dxdy - diffusion_yy d2/dy2 + r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgCoefficients {
    pub diffusion_xx: f64,
    pub drift_x: f64,
    pub drift_y: f64,
    pub cross_xy: f64,
    pub diffusion_yy: f64,
}
