//! Closed-form equilibrium for a Gaussian fundamental value `V ~ N(μ, γ²)`.
//!
//! Everything is driven by the dimensionless rate `κ = cσ/γ` through
//! `Λ(κ) = (√(κ² + 4) − κ)/2`, the positive root of `Λ² + κΛ = 1`; the
//! terminal price slope is `λ* = (γ/σ)Λ(κ)`.

use serde::Serialize;

use crate::distribution::ValueDistribution;
use crate::error::{Error, Result};
use crate::pair::{ConvexPair, Phi, Psi};
use crate::params::ModelParams;

/// `Λ(κ)`, computed as `2/(κ + √(κ² + 4))` to avoid cancellation for large κ.
pub fn big_lambda(kappa: f64) -> Result<f64> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::invalid(format!("κ must be finite and non-negative, got {kappa}")));
    }
    Ok(2.0 / (kappa + (kappa * kappa + 4.0).sqrt()))
}

/// `Λ'(κ) = −Λ²/(1 + Λ²)`.
pub fn big_lambda_prime(kappa: f64) -> Result<f64> {
    let l = big_lambda(kappa)?;
    Ok(-l * l / (1.0 + l * l))
}

/// Positive root of `σ²λ² + ĉλ − γ² = 0`.
pub fn lambda_star(c: f64, sigma: f64, gamma: f64) -> Result<f64> {
    if !(c > 0.0 && sigma > 0.0 && gamma > 0.0) {
        return Err(Error::invalid("c, σ and γ must all be positive"));
    }
    Ok(gamma / sigma * big_lambda(c * sigma / gamma)?)
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::invalid(format!("t must lie in [0, 1], got {t}")))
    }
}

/// `r(t) = Λ/(1 − tΛ²)`, the rate at which demand reverts towards the
/// value; equals the bridge rate `1/(1 − t)` as κ → 0.
pub fn speed_of_mean_reversion(t: f64, kappa: f64) -> Result<f64> {
    check_t(t)?;
    let l = big_lambda(kappa)?;
    Ok(l / (1.0 - t * l * l))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianModel {
    pub mu: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub c: f64,
    pub kappa_rate: f64,
    pub lambda_star: f64,
}

impl GaussianModel {
    pub fn new(mu: f64, gamma: f64, sigma: f64, c: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::invalid("μ must be finite"));
        }
        let lambda_star = lambda_star(c, sigma, gamma)?;
        Ok(Self { mu, gamma, sigma, c, kappa_rate: c * sigma / gamma, lambda_star })
    }

    /// Model with `c = κγ/σ`.
    pub fn from_kappa(kappa: f64, mu: f64, gamma: f64, sigma: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::invalid("κ must be positive"));
        }
        let mut m = Self::new(mu, gamma, sigma, kappa * gamma / sigma)?;
        m.kappa_rate = kappa;
        Ok(m)
    }

    pub fn params(&self) -> ModelParams {
        ModelParams::with_mean(self.sigma, self.c, self.mu).expect("validated on construction")
    }

    pub fn distribution(&self) -> ValueDistribution {
        ValueDistribution::gaussian(self.mu, self.gamma).expect("validated on construction")
    }

    pub fn chat(&self) -> f64 {
        self.c * self.sigma * self.sigma
    }

    /// `Λ = λ*σ/γ`.
    pub fn big_lambda(&self) -> f64 {
        big_lambda(self.kappa_rate).expect("validated on construction")
    }

    /// `φ*(y) = λ*y²/2 + μy`.
    pub fn phi(&self, y: f64) -> f64 {
        0.5 * self.lambda_star * y * y + self.mu * y
    }

    /// `Ψ*(v) = (ĉ/2) log(c/(c+λ*)) + (μ − v)²/(2(c+λ*))`.
    pub fn psi(&self, v: f64) -> f64 {
        let cl = self.c + self.lambda_star;
        0.5 * self.chat() * (self.c / cl).ln() + (self.mu - v).powi(2) / (2.0 * cl)
    }

    pub fn pair(&self) -> ConvexPair {
        gaussian_pair(self)
    }

    pub fn summary(&self) -> GaussianSummary {
        gaussian_summary(self)
    }

    pub fn speed_of_mean_reversion(&self, t: f64) -> Result<f64> {
        speed_of_mean_reversion(t, self.kappa_rate)
    }

    pub fn rho(&self, t: f64, y: f64, v: f64) -> Result<f64> {
        gaussian_rho(self, t, y, v)
    }

    pub fn conditional_variance(&self, t: f64) -> Result<f64> {
        conditional_variance(self, t)
    }
}

pub fn gaussian_pair(model: &GaussianModel) -> ConvexPair {
    ConvexPair::new(
        Phi::Quadratic { lambda: model.lambda_star, mu: model.mu },
        Psi::Gaussian { mu: model.mu, c: model.c, lambda: model.lambda_star },
        model.chat(),
    )
    .expect("closed-form pair is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub struct GaussianSummary {
    pub lambda_star: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    #[serde(rename = "Lambda_prime")]
    pub big_lambda_prime: f64,
    pub insider_wealth_exante: f64,
    pub expected_penalty: f64,
    pub welfare: f64,
    pub noise_loss: f64,
    pub inefficiency_delta: f64,
    pub liquidity_gain: f64,
    pub avg_entropy: f64,
}

pub fn gaussian_summary(model: &GaussianModel) -> GaussianSummary {
    let kappa = model.kappa_rate;
    let l = model.big_lambda();
    let gs = model.gamma * model.sigma;
    // κΛ = 1 − Λ²
    let log_kl = (-l * l).ln_1p();
    GaussianSummary {
        lambda_star: model.lambda_star,
        big_lambda: l,
        big_lambda_prime: -l * l / (1.0 + l * l),
        insider_wealth_exante: 0.5 * gs * (kappa * log_kl + 2.0 * l),
        expected_penalty: -0.5 * gs * kappa * log_kl,
        welfare: 0.5 * gs * kappa * log_kl,
        noise_loss: l * gs,
        inefficiency_delta: kappa * l * model.gamma * model.gamma,
        liquidity_gain: 1.0 / l - 1.0,
        avg_entropy: -0.5 * log_kl,
    }
}

/// Density of the conditional law of V given `Y_t = y` with respect to Π.
pub fn gaussian_rho(model: &GaussianModel, t: f64, y: f64, v: f64) -> Result<f64> {
    check_t(t)?;
    let l = model.big_lambda();
    let s = 1.0 - t * l * l;
    let g2 = model.gamma * model.gamma;
    let m = model.lambda_star * y + model.mu;
    let expo = -((v - m).powi(2) / s - (v - model.mu).powi(2)) / (2.0 * g2);
    Ok(expo.exp() / s.sqrt())
}

/// `Var(V | F_t) = γ²(1 − tΛ²)`.
pub fn conditional_variance(model: &GaussianModel, t: f64) -> Result<f64> {
    check_t(t)?;
    let l = model.big_lambda();
    Ok(model.gamma * model.gamma * (1.0 - t * l * l))
}

/// Expected penalty normalised by γσ, as a function of κ.
pub fn normalized_penalty(kappa: f64) -> Result<f64> {
    let l = big_lambda(kappa)?;
    Ok(-0.5 * kappa * (-l * l).ln_1p())
}

/// `(1 + Λ²)²/κ − 4`, the published inflection condition. Decreasing in κ.
///
/// Differentiating the penalty directly gives a different threshold; the
/// true curvature switch is [`penalty_convexity_switch_kappa`].
pub fn inflection_condition(kappa: f64) -> Result<f64> {
    let l = big_lambda(kappa)?;
    Ok((1.0 + l * l).powi(2) / kappa - 4.0)
}

/// Root κ₀ of [`inflection_condition`], by bisection over `(0.3, 0.7)`.
pub fn penalty_inflection_kappa0() -> f64 {
    let (mut lo, mut hi) = (0.3, 0.7);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if inflection_condition(mid).expect("positive κ") > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// κ where the normalised penalty actually turns from concave to convex.
///
/// With `x = Λ²`, `P''` has the sign of `2(1 − x) − (1 + x)²`, which vanishes
/// at `x = √5 − 2`; κ then follows from `κ = (1 − Λ²)/Λ`.
pub fn penalty_convexity_switch_kappa() -> f64 {
    let x = 5f64.sqrt() - 2.0;
    (1.0 - x) / x.sqrt()
}

/// κ maximising the normalised penalty, by golden-section search in log κ.
pub fn penalty_argmax_kappa() -> f64 {
    let f = |x: f64| normalized_penalty(x.exp()).expect("positive κ");
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = ((1e-3f64).ln(), (1e3f64).ln());
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-12 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    (0.5 * (a + b)).exp()
}

/// One row of the comparative-statics sweep; money amounts are in units of
/// γσ and `delta` in units of γ².
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub kappa: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub wealth: f64,
    pub penalty: f64,
    pub welfare: f64,
    pub noise_loss: f64,
    pub delta: f64,
    pub avg_entropy: f64,
}

pub const SWEEP_HEADER: &str = "kappa,Lambda,wealth,penalty,welfare,noise_loss,delta,avg_entropy";

impl SweepRow {
    pub fn at(kappa: f64) -> Result<Self> {
        let s = GaussianModel::from_kappa(kappa, 0.0, 1.0, 1.0)?.summary();
        Ok(Self {
            kappa,
            big_lambda: s.big_lambda,
            wealth: s.insider_wealth_exante,
            penalty: s.expected_penalty,
            welfare: s.welfare,
            noise_loss: s.noise_loss,
            delta: s.inefficiency_delta,
            avg_entropy: s.avg_entropy,
        })
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.kappa, self.big_lambda, self.wealth, self.penalty, self.welfare, self.noise_loss, self.delta, self.avg_entropy
        )
    }
}

/// `n` log-spaced κ values in `[lo, hi]`, endpoints included.
pub fn sweep(lo: f64, hi: f64, n: usize) -> Result<Vec<SweepRow>> {
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return Err(Error::invalid("sweep needs 0 < lo < hi and at least two points"));
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            let k = if i == n - 1 { hi } else { (a + (b - a) * i as f64 / (n - 1) as f64).exp() };
            SweepRow::at(if i == 0 { lo } else { k })
        })
        .collect()
}
