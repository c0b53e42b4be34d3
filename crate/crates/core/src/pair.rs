//! The pair `(φ, Ψ)` solving the joint fixed-point identities, and the
//! terminal data `j*(y, v) = Ψ(v) + φ(y) − y v` it defines.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::special::softmax;

#[derive(Debug, Clone, PartialEq)]
pub enum Phi {
    /// `φ(y) = λ y²/2 + μ y`.
    Quadratic { lambda: f64, mu: f64 },
    Grid(GridFunction),
}

/// `Ψ` at one node of Π together with that node's Π-weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiNode {
    pub v: f64,
    pub weight: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Psi {
    /// `Ψ(v) = (ĉ/2) log(c/(c+λ)) + (μ − v)²/(2(c+λ))`.
    Gaussian { mu: f64, c: f64, lambda: f64 },
    /// Values on the support (atoms, or quadrature nodes for non-atomic Π).
    Nodes(Vec<PsiNode>),
}

/// `φ` with `φ(0) = 0` and the matching `Ψ`.
///
/// When `Ψ` is stored on nodes, `φ` and its derivatives are evaluated through
/// `φ(y) = ĉ log Σ wᵢ exp((y vᵢ − Ψᵢ)/ĉ)` (shifted so that `φ(0) = 0`), which
/// is smooth and coincides with the tabulated `φ` at a fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPair {
    pub phi: Phi,
    pub psi: Psi,
    chat: f64,
    log_partition_at_zero: f64,
}

impl ConvexPair {
    pub fn new(phi: Phi, psi: Psi, chat: f64) -> Result<Self> {
        if !(chat > 0.0) {
            return Err(Error::invalid("ĉ must be positive"));
        }
        if let Psi::Nodes(nodes) = &psi {
            if nodes.is_empty() {
                return Err(Error::invalid("Ψ needs at least one node"));
            }
            if nodes.iter().any(|n| !(n.psi.is_finite() && n.weight > 0.0 && n.v.is_finite())) {
                return Err(Error::invalid("Ψ nodes must be finite with positive weights"));
            }
        }
        if let Phi::Grid(g) = &phi {
            let v0 = g.values()[g.zero_index()];
            if v0.abs() > 1e-12 {
                return Err(Error::invalid(format!("φ(0) must vanish, got {v0}")));
            }
        }
        let mut pair = Self { phi, psi, chat, log_partition_at_zero: 0.0 };
        if let Psi::Nodes(_) = pair.psi {
            pair.log_partition_at_zero = pair.log_partition(0.0);
        }
        Ok(pair)
    }

    pub fn chat(&self) -> f64 {
        self.chat
    }

    pub fn psi_nodes(&self) -> Option<&[PsiNode]> {
        match &self.psi {
            Psi::Nodes(n) => Some(n),
            Psi::Gaussian { .. } => None,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.phi, Phi::Quadratic { .. })
    }

    /// Closed-form `Ψ(v)`, or the stored value when `v` is a node.
    pub fn psi_known(&self, v: f64) -> Option<f64> {
        match &self.psi {
            Psi::Gaussian { mu, c, lambda } => {
                Some(0.5 * self.chat * (c / (c + lambda)).ln() + (mu - v) * (mu - v) / (2.0 * (c + lambda)))
            }
            Psi::Nodes(nodes) => nodes
                .iter()
                .find(|n| (n.v - v).abs() <= 1e-12 * n.v.abs().max(1.0))
                .map(|n| n.psi),
        }
    }

    /// `log Σ wᵢ exp((y vᵢ − Ψᵢ)/ĉ)`; only meaningful for node-valued Ψ.
    fn log_partition(&self, y: f64) -> f64 {
        let nodes = self.psi_nodes().expect("dual representation needs Ψ on nodes");
        let ex: Vec<f64> = nodes.iter().map(|n| n.weight.ln() + (y * n.v - n.psi) / self.chat).collect();
        softmax(&ex).1
    }

    /// Posterior of `V` given terminal demand `y`: weights `∝ wᵢ exp((y vᵢ − Ψᵢ)/ĉ)`.
    pub fn posterior_weights(&self, y: f64) -> Option<Vec<f64>> {
        let nodes = self.psi_nodes()?;
        let ex: Vec<f64> = nodes.iter().map(|n| n.weight.ln() + (y * n.v - n.psi) / self.chat).collect();
        Some(softmax(&ex).0)
    }

    fn posterior_moments(&self, y: f64) -> Option<(f64, f64)> {
        let nodes = self.psi_nodes()?;
        let w = self.posterior_weights(y)?;
        let mean: f64 = nodes.iter().zip(&w).map(|(n, w)| w * n.v).sum();
        let var: f64 = nodes.iter().zip(&w).map(|(n, w)| w * (n.v - mean) * (n.v - mean)).sum();
        Some((mean, var))
    }

    pub fn phi(&self, y: f64) -> f64 {
        match (&self.phi, &self.psi) {
            (Phi::Quadratic { lambda, mu }, _) => 0.5 * lambda * y * y + mu * y,
            (_, Psi::Nodes(_)) => self.chat * (self.log_partition(y) - self.log_partition_at_zero),
            (Phi::Grid(g), _) => g.eval(y, 0),
        }
    }

    /// `φ'(y)`: the posterior mean of `V` given `Y₁ = y`.
    pub fn phi_prime(&self, y: f64) -> f64 {
        match (&self.phi, &self.psi) {
            (Phi::Quadratic { lambda, mu }, _) => lambda * y + mu,
            (_, Psi::Nodes(_)) => self.posterior_moments(y).map(|m| m.0).unwrap_or(f64::NAN),
            (Phi::Grid(g), _) => g.eval(y, 1),
        }
    }

    /// `φ''(y)`: the posterior variance of `V` given `Y₁ = y`, divided by ĉ.
    pub fn phi_second(&self, y: f64) -> f64 {
        match (&self.phi, &self.psi) {
            (Phi::Quadratic { lambda, .. }, _) => *lambda,
            (_, Psi::Nodes(_)) => self.posterior_moments(y).map(|m| m.1 / self.chat).unwrap_or(f64::NAN),
            (Phi::Grid(g), _) => g.eval(y, 2),
        }
    }

    /// `j*(y, v) = Ψ(v) + φ(y) − y v`, given `Ψ(v)`.
    pub fn j_star(&self, psi_v: f64, y: f64, v: f64) -> f64 {
        psi_v + self.phi(y) - y * v
    }

    /// Returns a copy with every node value of Ψ shifted by `delta`.
    pub fn with_psi_shift(&self, delta: f64) -> Result<Self> {
        let psi = match &self.psi {
            Psi::Nodes(nodes) => Psi::Nodes(nodes.iter().map(|n| PsiNode { psi: n.psi + delta, ..*n }).collect()),
            Psi::Gaussian { .. } => return Err(Error::invalid("only node-valued Ψ can be shifted")),
        };
        let mut out = Self::new(self.phi.clone(), psi, self.chat)?;
        // keep the original normalisation so the shift is observable
        out.log_partition_at_zero = self.log_partition_at_zero;
        Ok(out)
    }
}
