//! Equilibrium of the continuous-time Kyle insider-trading model in which the
//! insider pays a quadratic penalty `(c/2)∫α²dt` on her trading rate.
//!
//! The equilibrium is pinned down by a pair of functions `(φ*, Ψ*)` solving
//!
//! ```text
//! ∫ exp((yv − φ(y))/ĉ) N(0,σ²)(dy) = exp(Ψ(v)/ĉ)
//! ∫ exp((yv − Ψ(v))/ĉ) Π(dv)       = exp(φ(y)/ĉ),      ĉ = cσ²
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`params`], [`distribution`], [`quadrature`], [`grid`], [`pair`]: domain
//!   types and numerical plumbing.
//! * [`operator`]: the integral operators and the fixed-point iteration.
//! * [`gaussian`], [`bernoulli`]: closed-form equilibria.
//! * [`analytics`]: every equilibrium quantity for a given pair.
//! * [`sim`]: Euler–Maruyama simulation of the equilibrium demand and Monte
//!   Carlo checks.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod bernoulli;
pub mod distribution;
pub mod error;
pub mod gaussian;
pub mod grid;
pub mod operator;
pub mod pair;
pub mod params;
pub mod quadrature;
pub mod sim;
mod special;

pub use analytics::{EquilibriumModel, KernelMode};
pub use bernoulli::BernoulliModel;
pub use distribution::ValueDistribution;
pub use error::{Error, Result};
pub use gaussian::{GaussianModel, GaussianSummary};
pub use grid::GridFunction;
pub use operator::{FixedPointOptions, FixedPointReport};
pub use pair::{ConvexPair, Phi, Psi, PsiNode};
pub use params::ModelParams;
pub use quadrature::QuadratureRule;
pub use sim::{McReport, PathEnsemble, SimConfig, VMode};
