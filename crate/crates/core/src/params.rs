use serde::Serialize;

use crate::error::{Error, Result};

/// Market primitives: noise-trader volatility `sigma`, penalty rate `c`, and
/// the mean of the fundamental value.
///
/// `ĉ = c·σ²` appears in every operator and is always derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    sigma: f64,
    c: f64,
    mu_bar: f64,
}

impl ModelParams {
    pub fn new(sigma: f64, c: f64) -> Result<Self> {
        Self::with_mean(sigma, c, 0.0)
    }

    pub fn with_mean(sigma: f64, c: f64, mu_bar: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("penalty rate c must be positive, got {c}")));
        }
        if !mu_bar.is_finite() {
            return Err(Error::invalid("mean of V must be finite"));
        }
        Ok(Self { sigma, c, mu_bar })
    }

    /// Parametrisation `c = κ γ/σ` used for Gaussian fundamentals.
    pub fn from_kappa(kappa: f64, sigma: f64, gamma: f64) -> Result<Self> {
        if !(kappa > 0.0 && gamma > 0.0) {
            return Err(Error::invalid("kappa and gamma must be positive"));
        }
        Self::new(sigma, kappa * gamma / sigma)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn chat(&self) -> f64 {
        self.c * self.sigma * self.sigma
    }

    pub fn mu_bar(&self) -> f64 {
        self.mu_bar
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_is_derived() {
        let p = ModelParams::new(2.0, 1.5).unwrap();
        assert_eq!(p.chat(), 1.5 * 2.0 * 2.0);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(ModelParams::new(0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, -1.0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn kappa_parametrisation() {
        let p = ModelParams::from_kappa(1.5, 2.0, 3.0).unwrap();
        assert!((p.c() - 2.25).abs() < 1e-15);
    }
}
