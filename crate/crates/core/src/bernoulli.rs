//! Bernoulli fundamental value `P(V = 1) = p`, `P(V = 0) = 1 − p`.
//!
//! The equilibrium reduces to one scalar `a ∈ (0, 1/p)` solving
//!
//! ```text
//! 1 = ∫ e^{y/ĉ} / (p(e^{y/ĉ} − 1) + 1/a) N(0,σ²)(dy)
//! ```
//!
//! after which `exp(φ/ĉ) = a p e^{y/ĉ} + 1 − a p`, `Ψ(1) = −ĉ log a` and
//! `Ψ(0) = −ĉ log((1 − a p)/(1 − p))`.

use serde::Serialize;

use crate::distribution::ValueDistribution;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::pair::{ConvexPair, Phi, Psi, PsiNode};
use crate::params::ModelParams;
use crate::quadrature::gauss_hermite;

pub const DEFAULT_QUAD_ORDER: usize = 120;

/// Integrand of the scalar equation, written to avoid overflow in `e^{y/ĉ}`.
fn integrand(y: f64, p: f64, a: f64, chat: f64) -> f64 {
    let x = y / chat;
    if x > 0.0 {
        let e = (-x).exp();
        1.0 / (p * (1.0 - e) + e / a)
    } else {
        let e = x.exp();
        e / (p * (e - 1.0) + 1.0 / a)
    }
}

/// Right-hand side of the scalar equation at `a`.
pub fn rhs(a: f64, p: f64, params: &ModelParams, quad_order: usize) -> Result<f64> {
    let q = gauss_hermite(quad_order, params.sigma())?;
    Ok(q.integrate(|y| integrand(y, p, a, params.chat())))
}

/// The unique root `a ∈ (0, 1/p)`: bisection down to a bracket of width
/// 1e-6, then safeguarded secant steps to 1e-12.
pub fn solve_a(p: f64, params: &ModelParams, quad_order: usize) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("p must lie in (0, 1], got {p}")));
    }
    if quad_order < 60 {
        return Err(Error::invalid("the scalar equation needs a quadrature order of at least 60"));
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let q = gauss_hermite(quad_order, params.sigma())?;
    let chat = params.chat();
    let f = |a: f64| q.integrate(|y| integrand(y, p, a, chat)) - 1.0;

    let (mut lo, mut hi) = (0.0, 1.0 / p);
    let (mut flo, mut fhi) = (-1.0, f(hi));
    if !(fhi > 0.0) {
        return Err(Error::Numerical(format!("scalar equation not bracketed on (0, {hi})")));
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm > 0.0 {
            hi = mid;
            fhi = fm;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    let (mut x0, mut f0, mut x1, mut f1) = (lo, flo, hi, fhi);
    for _ in 0..100 {
        if (x1 - x0).abs() <= 1e-12 || f1 == 0.0 {
            break;
        }
        let mut x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !(x2 > lo && x2 < hi) {
            x2 = 0.5 * (lo + hi);
        }
        let f2 = f(x2);
        if f2 > 0.0 {
            hi = x2;
        } else {
            lo = x2;
        }
        (x0, f0, x1, f1) = (x1, f1, x2, f2);
    }
    if f1.abs() > 1e-10 {
        return Err(Error::Numerical(format!("scalar equation residual {f1:e} after refinement")));
    }
    Ok(x1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernoulliModel {
    pub p: f64,
    pub a: f64,
    #[serde(skip)]
    pub params: ModelParams,
}

impl BernoulliModel {
    pub fn new(p: f64, params: ModelParams) -> Result<Self> {
        Self::with_quad_order(p, params, DEFAULT_QUAD_ORDER)
    }

    pub fn with_quad_order(p: f64, params: ModelParams, quad_order: usize) -> Result<Self> {
        let a = solve_a(p, &params, quad_order)?;
        Ok(Self { p, a, params })
    }

    pub fn distribution(&self) -> ValueDistribution {
        if self.p == 1.0 {
            ValueDistribution::point_mass(1.0).expect("valid atom")
        } else {
            ValueDistribution::bernoulli(self.p).expect("validated p")
        }
    }

    fn ap(&self) -> f64 {
        self.a * self.p
    }

    /// `φ(y) = ĉ log(a p e^{y/ĉ} + 1 − a p)`.
    pub fn phi(&self, y: f64) -> f64 {
        let chat = self.params.chat();
        let ap = self.ap();
        let x = y / chat;
        if x > 0.0 {
            y + chat * (ap + (1.0 - ap) * (-x).exp()).ln()
        } else {
            chat * (ap * x.exp_m1()).ln_1p()
        }
    }

    /// Terminal price `h = φ'`, the posterior probability that `V = 1`.
    pub fn h(&self, y: f64) -> f64 {
        let ap = self.ap();
        let x = y / self.params.chat();
        if self.p == 1.0 {
            return 1.0;
        }
        1.0 / (1.0 + (1.0 - ap) / ap * (-x).exp())
    }

    pub fn psi1(&self) -> f64 {
        -self.params.chat() * self.a.ln()
    }

    /// `Ψ(0)`; undefined (NaN) when `p = 1`.
    pub fn psi0(&self) -> f64 {
        -self.params.chat() * ((1.0 - self.ap()) / (1.0 - self.p)).ln()
    }

    /// The pair with φ tabulated on `[−half_width·σ, half_width·σ]`.
    pub fn pair_on_grid(&self, half_width: f64, n_points: usize) -> Result<ConvexPair> {
        let g = GridFunction::tabulate(half_width * self.params.sigma(), n_points, |y| self.phi(y))?;
        let mut values = g.values().to_vec();
        values[g.zero_index()] = 0.0;
        let g = g.with_values(values, self.h(g.y_min()), self.h(g.y_max()))?;
        let mut nodes = Vec::with_capacity(2);
        if self.p < 1.0 {
            nodes.push(PsiNode { v: 0.0, weight: 1.0 - self.p, psi: self.psi0() });
        }
        nodes.push(PsiNode { v: 1.0, weight: self.p, psi: self.psi1() });
        ConvexPair::new(Phi::Grid(g), Psi::Nodes(nodes), self.params.chat())
    }

    pub fn pair(&self) -> ConvexPair {
        self.pair_on_grid(crate::grid::DEFAULT_HALF_WIDTH, crate::grid::DEFAULT_POINTS)
            .expect("default grid is valid")
    }
}

pub fn bernoulli_pair(model: &BernoulliModel) -> ConvexPair {
    model.pair()
}
