//! Equilibrium quantities derived from a solved pair `(φ, Ψ)`.
//!
//! With `j*(y, v) = Ψ(v) + φ(y) − yv` and `X ~ N(y, σ²(1 − t))`,
//!
//! ```text
//! ρ*(t, y, v) = E[exp(−j*(X, v)/ĉ)]          conditional density of V w.r.t. Π
//! H*(t, y)    = ∫ v ρ*(t, y, v) Π(dv)         pricing rule
//! α*(t, y, v) = σ² ∂_y ρ* / ρ*                insider trading rate
//! ```
//!
//! Kernel expectations use Gauss–Hermite quadrature, or exact Gaussian
//! moments when φ is quadratic and [`KernelMode::Auto`] is selected.

use serde::Serialize;

use crate::bernoulli::BernoulliModel;
use crate::distribution::ValueDistribution;
use crate::error::{Error, Result};
use crate::gaussian::GaussianModel;
use crate::operator::{apply_t1, apply_t1_fn, check_tt_diagnostic, FixedPointReport};
use crate::pair::{ConvexPair, Phi, PsiNode};
use crate::params::ModelParams;
use crate::quadrature::{gauss_hermite, QuadratureRule};
use crate::special::softmax;

/// Largest `check_tt_diagnostic` accepted when building a model.
pub const MAX_PAIR_DEVIATION: f64 = 1e-6;

/// Times at or beyond `1 − TERMINAL_GAP` use the terminal forms directly.
pub const TERMINAL_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    /// Closed-form Gaussian moments when φ is quadratic, quadrature otherwise.
    #[default]
    Auto,
    /// Always Gauss–Hermite, with `H*` summed over the nodes of Π.
    Quadrature,
}

#[derive(Debug, Clone)]
pub struct EquilibriumModel {
    pair: ConvexPair,
    dist: ValueDistribution,
    params: ModelParams,
    /// Standard normal rule for the heat kernel.
    std_quad: QuadratureRule,
    /// Rule for `N(0, σ²)`.
    sigma_quad: QuadratureRule,
    pi_nodes: Vec<PsiNode>,
    mode: KernelMode,
    deviation: f64,
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::invalid(format!("t must lie in [0, 1], got {t}")))
    }
}

impl EquilibriumModel {
    pub fn new(pair: ConvexPair, dist: ValueDistribution, params: ModelParams) -> Result<Self> {
        Self::with_options(pair, dist, params, 120, KernelMode::Auto)
    }

    pub fn with_options(
        pair: ConvexPair,
        dist: ValueDistribution,
        params: ModelParams,
        quad_order: usize,
        mode: KernelMode,
    ) -> Result<Self> {
        if (pair.chat() - params.chat()).abs() > 1e-12 * params.chat() {
            return Err(Error::invalid("pair and parameters disagree on ĉ"));
        }
        let deviation = check_tt_diagnostic(&pair, &dist, &params);
        if !(deviation <= MAX_PAIR_DEVIATION) {
            return Err(Error::invalid(format!(
                "pair is not an equilibrium pair for this distribution (deviation {deviation:e})"
            )));
        }
        let pi_nodes = match pair.psi_nodes() {
            Some(n) => n.to_vec(),
            None => dist
                .nodes(quad_order)?
                .iter()
                .map(|(v, weight)| PsiNode { v, weight, psi: pair.psi_known(v).expect("closed-form Ψ") })
                .collect(),
        };
        Ok(Self {
            std_quad: gauss_hermite(quad_order, 1.0)?,
            sigma_quad: gauss_hermite(quad_order, params.sigma())?,
            pair,
            dist,
            params,
            pi_nodes,
            mode,
            deviation,
        })
    }

    pub fn from_report(report: &FixedPointReport, dist: ValueDistribution, params: ModelParams) -> Result<Self> {
        Self::new(report.pair.clone(), dist, params)
    }

    pub fn gaussian(model: &GaussianModel) -> Self {
        Self::new(model.pair(), model.distribution(), model.params()).expect("closed-form pair is exact")
    }

    pub fn bernoulli(model: &BernoulliModel) -> Result<Self> {
        Self::new(model.pair(), model.distribution(), model.params)
    }

    pub fn with_mode(mut self, mode: KernelMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn pair(&self) -> &ConvexPair {
        &self.pair
    }

    pub fn distribution(&self) -> &ValueDistribution {
        &self.dist
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    /// Deviation of the pair from the joint identities, measured once at
    /// construction.
    pub fn pair_deviation(&self) -> f64 {
        self.deviation
    }

    /// Nodes of Π (atoms or quadrature nodes) with Ψ attached.
    pub fn pi_nodes(&self) -> &[PsiNode] {
        &self.pi_nodes
    }

    fn quadratic(&self) -> Option<(f64, f64)> {
        match (&self.pair.phi, self.mode) {
            (Phi::Quadratic { lambda, mu }, KernelMode::Auto) => Some((*lambda, *mu)),
            _ => None,
        }
    }

    pub fn psi(&self, v: f64) -> f64 {
        if let Some(p) = self.pair.psi_known(v) {
            return p;
        }
        let out = match &self.pair.phi {
            Phi::Grid(g) => apply_t1(g, &self.params, v),
            Phi::Quadratic { .. } => apply_t1_fn(|y| self.pair.phi(y), &self.params, &self.sigma_quad, v),
        };
        out.unwrap_or(f64::NAN)
    }

    fn kernel_sd(&self, t: f64) -> f64 {
        self.params.sigma() * (1.0 - t).sqrt()
    }

    /// Log-weights `ln wᵢ + (vXᵢ − φ(Xᵢ))/ĉ` at the kernel nodes `Xᵢ = y + s zᵢ`.
    fn kernel_log_weights(&self, t: f64, y: f64, v: f64) -> (Vec<f64>, Vec<f64>) {
        let s = self.kernel_sd(t);
        let chat = self.params.chat();
        let xs: Vec<f64> = self.std_quad.nodes().iter().map(|z| y + s * z).collect();
        let lw = xs
            .iter()
            .zip(self.std_quad.weights())
            .map(|(x, w)| w.ln() + (v * x - self.pair.phi(*x)) / chat)
            .collect();
        (xs, lw)
    }

    fn log_rho_psi(&self, t: f64, y: f64, v: f64, psi: f64) -> Result<f64> {
        check_t(t)?;
        let chat = self.params.chat();
        let out = if t >= 1.0 - TERMINAL_GAP {
            (y * v - psi - self.pair.phi(y)) / chat
        } else if let Some((lambda, mu)) = self.quadratic() {
            let a = lambda / chat;
            let b = (v - mu) / chat;
            let s2 = self.kernel_sd(t).powi(2);
            let d = 1.0 + a * s2;
            -psi / chat - 0.5 * d.ln() + (b * y - 0.5 * a * y * y + 0.5 * b * b * s2) / d
        } else {
            let (_, lw) = self.kernel_log_weights(t, y, v);
            -psi / chat + softmax(&lw).1
        };
        if out.is_nan() || out == f64::INFINITY {
            return Err(Error::domain(format!("ρ* overflows at (t, y, v) = ({t}, {y}, {v})")));
        }
        Ok(out)
    }

    pub fn log_rho(&self, t: f64, y: f64, v: f64) -> Result<f64> {
        self.log_rho_psi(t, y, v, self.psi(v))
    }

    /// `ρ*(t, y, v)`.
    pub fn rho_star(&self, t: f64, y: f64, v: f64) -> Result<f64> {
        let psi = self.psi(v);
        let out = self.log_rho_psi(t, y, v, psi)?;
        if cfg!(debug_assertions) && t < 1.0 - TERMINAL_GAP {
            let (lo, hi) = self.log_rho_bounds_psi(t, y, v, psi);
            let slack = 1e-7 * (1.0 + out.abs());
            debug_assert!(out >= lo - slack && out <= hi + slack, "ρ* outside its bounds at ({t}, {y}, {v})");
        }
        Ok(out.exp())
    }

    fn log_rho_bounds_psi(&self, t: f64, y: f64, v: f64, psi: f64) -> (f64, f64) {
        let chat = self.params.chat();
        let c = self.params.c();
        let s2 = self.params.sigma().powi(2);
        let h0 = self.pair.phi_prime(0.0);
        let hi = -psi / chat + (1.0 - t) * (v - h0).powi(2) / (2.0 * c * c * s2) + (v - h0) * y / chat;
        let lo = (v * y - psi - self.expected_phi_under_kernel(t, y)) / chat;
        (lo, hi)
    }

    /// Bounds `(lower, upper)` on `ln ρ*`: Jensen below, and above the
    /// Gaussian moment bound obtained from `φ(y) ≥ φ'(0) y`.
    pub fn log_rho_bounds(&self, t: f64, y: f64, v: f64) -> Result<(f64, f64)> {
        check_t(t)?;
        Ok(self.log_rho_bounds_psi(t, y, v, self.psi(v)))
    }

    /// `E[φ(X)]`, `X ~ N(y, σ²(1 − t))`.
    fn expected_phi_under_kernel(&self, t: f64, y: f64) -> f64 {
        if let Some((lambda, mu)) = self.quadratic() {
            return 0.5 * lambda * (y * y + self.kernel_sd(t).powi(2)) + mu * y;
        }
        let s = self.kernel_sd(t);
        self.std_quad.integrate_shifted(y, s, |x| self.pair.phi(x))
    }

    /// `∂_y ρ* / ρ*`, from the derivative of the Gaussian kernel.
    fn rho_y_over_rho(&self, t: f64, y: f64, v: f64) -> Result<f64> {
        check_t(t)?;
        let chat = self.params.chat();
        if t >= 1.0 - TERMINAL_GAP {
            return Ok((v - self.pair.phi_prime(y)) / chat);
        }
        if let Some((lambda, mu)) = self.quadratic() {
            let a = lambda / chat;
            let b = (v - mu) / chat;
            let s2 = self.kernel_sd(t).powi(2);
            return Ok((b - a * y) / (1.0 + a * s2));
        }
        let s2 = self.kernel_sd(t).powi(2);
        let (xs, lw) = self.kernel_log_weights(t, y, v);
        let (w, _) = softmax(&lw);
        Ok(xs.iter().zip(&w).map(|(x, w)| w * (x - y)).sum::<f64>() / s2)
    }

    /// `H*(t, y)`.
    pub fn pricing_rule_h(&self, t: f64, y: f64) -> Result<f64> {
        check_t(t)?;
        if let Some(v0) = self.dist.point_mass_value() {
            return Ok(v0);
        }
        if t >= 1.0 - TERMINAL_GAP {
            return Ok(self.pair.phi_prime(y));
        }
        match self.mode {
            KernelMode::Auto => {
                if let Some((lambda, mu)) = self.quadratic() {
                    return Ok(lambda * y + mu);
                }
                // H* solves the backward heat equation with terminal data φ'
                let s = self.kernel_sd(t);
                Ok(self.std_quad.integrate_shifted(y, s, |x| self.pair.phi_prime(x)))
            }
            KernelMode::Quadrature => {
                let mut acc = 0.0;
                for n in &self.pi_nodes {
                    acc += n.weight * n.v * self.log_rho_psi(t, y, n.v, n.psi)?.exp();
                }
                Ok(acc)
            }
        }
    }

    /// `α*(t, y, v) = σ² ∂_y ρ*/ρ*`, defined for `t < 1`.
    pub fn alpha_star(&self, t: f64, y: f64, v: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::invalid(format!("the trading rate is defined on [0, 1), got t = {t}")));
        }
        if self.dist.point_mass_value().is_some() {
            return Ok(0.0);
        }
        Ok(self.params.sigma().powi(2) * self.rho_y_over_rho(t, y, v)?)
    }

    /// `∫ ρ*(t, y, v) Π(dv)`; equals one for an equilibrium pair.
    pub fn normalization(&self, t: f64, y: f64) -> Result<f64> {
        let mut acc = 0.0;
        for n in &self.pi_nodes {
            acc += n.weight * self.log_rho_psi(t, y, n.v, n.psi)?.exp();
        }
        Ok(acc)
    }

    /// `∫ α*(t, y, v) ρ*(t, y, v) Π(dv)`; vanishes in equilibrium.
    pub fn strategy_centering(&self, t: f64, y: f64) -> Result<f64> {
        let mut acc = 0.0;
        for n in &self.pi_nodes {
            acc += n.weight * self.alpha_star(t, y, n.v)? * self.log_rho_psi(t, y, n.v, n.psi)?.exp();
        }
        Ok(acc)
    }

    /// `E[φ(σB₁)]`.
    fn expected_phi(&self) -> f64 {
        if let Phi::Quadratic { lambda, .. } = self.pair.phi {
            return 0.5 * lambda * self.params.sigma().powi(2);
        }
        self.sigma_quad.integrate(|y| self.pair.phi(y))
    }

    /// Insider's expected profit given `V = v`: `Ψ(v) + E[φ(σB₁)]`.
    pub fn insider_value(&self, v: f64) -> f64 {
        self.psi(v) + self.expected_phi()
    }

    /// First and second moment of φ and of Y under `Q_v ∝ exp((vy − φ(y))/ĉ) N(0, σ²)`,
    /// returned as `(E[Y], E[φ(Y)])`.
    fn tilted_moments(&self, v: f64) -> (f64, f64) {
        let chat = self.params.chat();
        let s2 = self.params.sigma().powi(2);
        match &self.pair.phi {
            Phi::Quadratic { lambda, mu } => {
                let var = chat / (self.params.c() + lambda);
                let mean = var * (v - mu) / chat;
                (mean, 0.5 * lambda * (var + mean * mean) + mu * mean)
            }
            Phi::Grid(g) => {
                // trapezoid on the grid nodes, as in T1
                let ys: Vec<f64> = g.nodes().collect();
                let lw: Vec<f64> = ys
                    .iter()
                    .zip(g.values())
                    .map(|(y, f)| (v * y - f) / chat - 0.5 * y * y / s2)
                    .collect();
                let (w, _) = softmax(&lw);
                let ey = ys.iter().zip(&w).map(|(y, w)| w * y).sum();
                let ephi = ys.iter().zip(&w).map(|(y, w)| w * self.pair.phi(*y)).sum();
                (ey, ephi)
            }
        }
    }

    /// `Ψ'(v) = E^{Q_v}[Y]`.
    pub fn psi_prime(&self, v: f64) -> f64 {
        self.tilted_moments(v).0
    }

    /// Expected penalty paid by the insider given `V = v`:
    /// `vΨ'(v) − Ψ(v) − E^{Q_v}[φ]`, which is ĉ times a relative entropy.
    pub fn expected_penalty_per_v(&self, v: f64) -> f64 {
        let (ey, ephi) = self.tilted_moments(v);
        v * ey - self.psi(v) - ephi
    }

    /// Relative entropy of the insider's demand law given `V = v` with
    /// respect to Brownian motion.
    pub fn relative_entropy(&self, v: f64) -> f64 {
        self.expected_penalty_per_v(v) / self.params.chat()
    }

    fn pi_average(&self, f: impl Fn(&PsiNode) -> f64) -> f64 {
        self.pi_nodes.iter().map(|n| n.weight * f(n)).sum()
    }

    pub fn expected_penalty(&self) -> f64 {
        self.pi_average(|n| self.expected_penalty_per_v(n.v))
    }

    pub fn insider_wealth(&self) -> f64 {
        self.pi_average(|n| self.insider_value(n.v))
    }

    pub fn average_entropy(&self) -> f64 {
        self.pi_average(|n| self.relative_entropy(n.v))
    }

    /// `E[φ''(σB₁)]`.
    fn expected_curvature(&self) -> f64 {
        if let Phi::Quadratic { lambda, .. } = self.pair.phi {
            return lambda;
        }
        self.sigma_quad.integrate(|y| self.pair.phi_second(y))
    }

    /// Expected loss of the noise traders, `σ² E[φ''(σB₁)]`.
    pub fn noise_loss(&self) -> f64 {
        self.params.sigma().powi(2) * self.expected_curvature()
    }

    /// `δ = E[Var(V | Y₁)] = ĉ E[φ''(σB₁)]`.
    pub fn price_inefficiency(&self) -> f64 {
        self.params.chat() * self.expected_curvature()
    }

    /// `Var(V | Y_t = y) = E[ĉφ''(X) + φ'(X)²] − H*(t, y)²`.
    ///
    /// Only computed for bounded or Gaussian Π, where differentiating under
    /// the integral is justified.
    pub fn conditional_variance(&self, t: f64, y: f64) -> Result<f64> {
        check_t(t)?;
        if self.dist.support_bound().is_none() && !self.dist.is_gaussian() {
            return Err(Error::domain("conditional variance needs bounded support or a Gaussian value"));
        }
        let chat = self.params.chat();
        if let Some((lambda, _)) = self.quadratic() {
            return Ok(chat * lambda + lambda * lambda * self.kernel_sd(t).powi(2));
        }
        if t >= 1.0 - TERMINAL_GAP {
            return Ok(chat * self.pair.phi_second(y));
        }
        let s = self.kernel_sd(t);
        let second = self.std_quad.integrate_shifted(y, s, |x| {
            let d1 = self.pair.phi_prime(x);
            chat * self.pair.phi_second(x) + d1 * d1
        });
        let h = self.std_quad.integrate_shifted(y, s, |x| self.pair.phi_prime(x));
        Ok((second - h * h).max(0.0))
    }

    /// `J(t, y, v) = Ψ(v) + E[φ(X)] − yv + ĉ log ρ*(t, y, v)`.
    pub fn value_function_j(&self, t: f64, y: f64, v: f64) -> Result<f64> {
        check_t(t)?;
        let psi = self.psi(v);
        if t >= 1.0 - TERMINAL_GAP {
            return Ok(0.0);
        }
        let e_phi = self.expected_phi_under_kernel(t, y);
        Ok(psi + e_phi - y * v + self.params.chat() * self.log_rho_psi(t, y, v, psi)?)
    }

    /// `J_t + σ²J_yy/2 + (J_y + v − H*)²/(2c)` by central differences.
    pub fn hjb_residual(&self, t: f64, y: f64, v: f64) -> Result<f64> {
        let ht = 1e-4;
        let hy = 1e-3;
        if !(t - ht >= 0.0 && t + ht < 1.0 - TERMINAL_GAP) {
            return Err(Error::invalid(format!("HJB residual needs an interior time, got {t}")));
        }
        let j = |t, y| self.value_function_j(t, y, v);
        let jt = (j(t + ht, y)? - j(t - ht, y)?) / (2.0 * ht);
        let j0 = j(t, y)?;
        let (jp, jm) = (j(t, y + hy)?, j(t, y - hy)?);
        let jy = (jp - jm) / (2.0 * hy);
        let jyy = (jp - 2.0 * j0 + jm) / (hy * hy);
        let h = self.pricing_rule_h(t, y)?;
        let s2 = self.params.sigma().powi(2);
        Ok(jt + 0.5 * s2 * jyy + (jy + v - h).powi(2) / (2.0 * self.params.c()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianModel;

    fn gauss() -> (GaussianModel, EquilibriumModel) {
        let m = GaussianModel::from_kappa(1.5, 0.0, 1.0, 1.0).unwrap();
        (m, EquilibriumModel::gaussian(&m))
    }

    #[test]
    fn rho_examples() {
        let (m, em) = gauss();
        for v in [-1.0, 0.0, 2.0] {
            assert!((em.rho_star(0.0, 0.0, v).unwrap() - 1.0).abs() < 1e-9);
        }
        let closed = m.rho(0.5, 0.8, 0.3).unwrap();
        assert!((em.rho_star(0.5, 0.8, 0.3).unwrap() - closed).abs() < 1e-8);
        let quad = em.clone().with_mode(KernelMode::Quadrature);
        assert!((quad.rho_star(0.5, 0.8, 0.3).unwrap() - closed).abs() < 1e-8);
        let (y, v) = (0.4, 1.2);
        let terminal = ((y * v - m.psi(v) - m.phi(y)) / m.chat()).exp();
        assert_eq!(em.rho_star(1.0, y, v).unwrap(), terminal);
    }

    #[test]
    fn gaussian_pricing_and_strategy() {
        let (m, em) = gauss();
        let quad = em.clone().with_mode(KernelMode::Quadrature);
        for t in [0.0, 0.3, 0.9, 1.0] {
            for y in [-1.0, 0.0, 1.7] {
                assert!((em.pricing_rule_h(t, y).unwrap() - 0.5 * y).abs() < 1e-12);
                assert!((quad.pricing_rule_h(t, y).unwrap() - 0.5 * y).abs() < 1e-8);
            }
        }
        assert!((em.alpha_star(0.0, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((quad.alpha_star(0.0, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-8);
        let l = m.big_lambda();
        // zero at y = σ(v − μ)/(γΛ)
        assert!(em.alpha_star(0.4, 1.0 / l, 1.0).unwrap().abs() < 1e-12);
        assert!(em.alpha_star(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_values() {
        let (_, em) = gauss();
        assert!((em.insider_value(1.0) - 0.284239).abs() < 1e-6);
        assert!((em.expected_penalty_per_v(1.0) - 0.215761).abs() < 1e-6);
        assert!((em.psi_prime(1.0) - 0.5).abs() < 1e-15);
        assert!((em.noise_loss() - 0.5).abs() < 1e-15);
        assert!((em.price_inefficiency() - 0.75).abs() < 1e-15);
        for t in [0.0, 0.4, 1.0] {
            assert!((em.conditional_variance(t, 0.3).unwrap() - (1.0 - 0.25 * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn value_function_terminal_and_initial() {
        let (_, em) = gauss();
        assert_eq!(em.value_function_j(1.0, 0.3, 2.0).unwrap(), 0.0);
        for v in [-1.0, 1.0, 2.5] {
            assert!((em.value_function_j(0.0, 0.0, v).unwrap() - em.insider_value(v)).abs() < 1e-9);
        }
        assert!(em.hjb_residual(0.5, 0.7, 1.0).unwrap().abs() < 1e-4);
    }

    #[test]
    fn point_mass_degenerates() {
        let params = ModelParams::new(1.0, 0.8).unwrap();
        let dist = ValueDistribution::point_mass(0.7).unwrap();
        let r = crate::operator::solve_fixed_point(&dist, &params, &Default::default()).unwrap();
        let em = EquilibriumModel::from_report(&r, dist, params).unwrap();
        assert_eq!(em.pricing_rule_h(0.3, 1.0).unwrap(), 0.7);
        assert_eq!(em.alpha_star(0.3, 1.0, 0.7).unwrap(), 0.0);
        assert!(em.insider_value(0.7).abs() < 1e-12);
        assert!(em.expected_penalty_per_v(0.7).abs() < 1e-9);
        assert!(em.noise_loss().abs() < 1e-12);
        assert!(em.price_inefficiency().abs() < 1e-12);
    }

    #[test]
    fn rejects_foreign_pair() {
        let (m, _) = gauss();
        let other = ValueDistribution::gaussian(0.0, 2.0).unwrap();
        assert!(EquilibriumModel::new(m.pair(), other, m.params()).is_err());
    }
}
