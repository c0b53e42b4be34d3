//! The law Π of the fundamental value `V`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_hermite, QuadratureRule};
use crate::special::log_sum_exp;

/// Non-decreasing map `η ↦ f(η)` from a standard normal to `V`.
pub type QuantileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ValueDistribution {
    /// Finitely many atoms `(v, p)`, sorted ascending and distinct.
    Discrete { atoms: Vec<(f64, f64)> },
    Gaussian { mu: f64, gamma: f64 },
    /// `V = f(η)` with `η ~ N(0, 1)`; integrals use Gauss–Hermite on `η`.
    QuantileMap {
        f: QuantileFn,
        n_base_nodes: usize,
        support_bound: Option<f64>,
    },
}

impl fmt::Debug for ValueDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Discrete { atoms } => f.debug_struct("Discrete").field("atoms", atoms).finish(),
            Self::Gaussian { mu, gamma } => {
                f.debug_struct("Gaussian").field("mu", mu).field("gamma", gamma).finish()
            }
            Self::QuantileMap { n_base_nodes, support_bound, .. } => f
                .debug_struct("QuantileMap")
                .field("n_base_nodes", n_base_nodes)
                .field("support_bound", support_bound)
                .finish_non_exhaustive(),
        }
    }
}

impl ValueDistribution {
    pub fn discrete(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        if atoms.is_empty() {
            return Err(Error::invalid("discrete distribution needs at least one atom"));
        }
        for &(v, p) in &atoms {
            if !v.is_finite() || !(p > 0.0 && p.is_finite()) {
                return Err(Error::invalid(format!("bad atom ({v}, {p}): need finite v and p > 0")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("atom probabilities sum to {total}, not 1")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("atoms must be distinct"));
        }
        Ok(Self::Discrete { atoms })
    }

    /// `Π(V=1) = p`, `Π(V=0) = 1 − p`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("Bernoulli p must lie in (0,1), got {p}")));
        }
        Self::discrete([(0.0, 1.0 - p), (1.0, p)])
    }

    pub fn point_mass(v: f64) -> Result<Self> {
        Self::discrete([(v, 1.0)])
    }

    pub fn gaussian(mu: f64, gamma: f64) -> Result<Self> {
        if !mu.is_finite() || !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("Gaussian needs finite mu and gamma > 0, got ({mu}, {gamma})")));
        }
        Ok(Self::Gaussian { mu, gamma })
    }

    /// Monotonicity of `f` is checked on the Gauss–Hermite base nodes.
    pub fn quantile_map(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        n_base_nodes: usize,
        support_bound: Option<f64>,
    ) -> Result<Self> {
        let base = gauss_hermite(n_base_nodes, 1.0)?;
        let values: Vec<f64> = base.nodes().iter().map(|x| f(*x)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("quantile map returned a non-finite value"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("quantile map is not non-decreasing on the base nodes"));
        }
        if let Some(b) = support_bound {
            if values.iter().any(|v| v.abs() > b) {
                return Err(Error::invalid("quantile map exceeds its declared support bound"));
            }
        }
        Ok(Self::QuantileMap { f: Arc::new(f), n_base_nodes, support_bound })
    }

    /// `sup |v|` over the support, when finite.
    pub fn support_bound(&self) -> Option<f64> {
        match self {
            Self::Discrete { atoms } => atoms.iter().map(|a| a.0.abs()).reduce(f64::max),
            Self::Gaussian { .. } => None,
            Self::QuantileMap { support_bound, .. } => *support_bound,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Self::Gaussian { .. })
    }

    /// Single atom value, if Π is a point mass.
    pub fn point_mass_value(&self) -> Option<f64> {
        match self {
            Self::Discrete { atoms } if atoms.len() == 1 => Some(atoms[0].0),
            _ => None,
        }
    }

    /// Quadrature rule for `∫ g(v) Π(dv)`: the atoms themselves for discrete
    /// Π, Gauss–Hermite of the given order otherwise.
    pub fn nodes(&self, order: usize) -> Result<QuadratureRule> {
        match self {
            Self::Discrete { atoms } => QuadratureRule::from_atoms(
                atoms.iter().map(|a| a.0).collect(),
                atoms.iter().map(|a| a.1).collect(),
            ),
            Self::Gaussian { mu, gamma } => {
                let mu = *mu;
                Ok(gauss_hermite(order, *gamma)?.mapped(|x| mu + x))
            }
            Self::QuantileMap { f, n_base_nodes, .. } => Ok(gauss_hermite(*n_base_nodes, 1.0)?.mapped(|x| f(x))),
        }
    }

    pub fn mgf(&self, r: f64) -> Result<f64> {
        if !r.is_finite() {
            return Err(Error::invalid("mgf argument must be finite"));
        }
        let log_m = match self {
            Self::Discrete { atoms } => log_sum_exp(atoms.iter().map(|(v, p)| p.ln() + r * v)),
            Self::Gaussian { mu, gamma } => r * mu + 0.5 * r * r * gamma * gamma,
            Self::QuantileMap { .. } => self.nodes(0)?.log_integrate_exp(|v| r * v),
        };
        let m = log_m.exp();
        if !m.is_finite() {
            return Err(Error::Range { r });
        }
        Ok(m)
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Discrete { atoms } => atoms.iter().map(|(v, p)| v * p).sum(),
            Self::Gaussian { mu, .. } => *mu,
            Self::QuantileMap { .. } => self.nodes(0).map(|q| q.integrate(|v| v)).unwrap_or(f64::NAN),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Gaussian { gamma, .. } => gamma * gamma,
            _ => {
                let m = self.mean();
                self.nodes(0).map(|q| q.integrate(|v| (v - m) * (v - m))).unwrap_or(f64::NAN)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Discrete { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in atoms {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                atoms[atoms.len() - 1].0
            }
            Self::Gaussian { mu, gamma } => {
                let z: f64 = StandardNormal.sample(rng);
                mu + gamma * z
            }
            Self::QuantileMap { f, .. } => {
                let z: f64 = StandardNormal.sample(rng);
                f(z)
            }
        }
    }

    /// JSON-facing description; `None` for quantile maps, which carry code.
    pub fn to_spec(&self) -> Option<DistributionSpec> {
        match self {
            Self::Discrete { atoms } => Some(DistributionSpec::Discrete { atoms: atoms.iter().map(|(v, p)| [*v, *p]).collect() }),
            Self::Gaussian { mu, gamma } => Some(DistributionSpec::Gaussian { mu: *mu, gamma: *gamma }),
            Self::QuantileMap { .. } => None,
        }
    }
}

/// `{"type":"discrete","atoms":[[v,p],...]}` or
/// `{"type":"gaussian","mu":..,"gamma":..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DistributionSpec {
    Discrete { atoms: Vec<[f64; 2]> },
    Gaussian { mu: f64, gamma: f64 },
}

impl TryFrom<DistributionSpec> for ValueDistribution {
    type Error = Error;

    fn try_from(spec: DistributionSpec) -> Result<Self> {
        match spec {
            DistributionSpec::Discrete { atoms } => Self::discrete(atoms.into_iter().map(|[v, p]| (v, p))),
            DistributionSpec::Gaussian { mu, gamma } => Self::gaussian(mu, gamma),
        }
    }
}

impl ValueDistribution {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: DistributionSpec =
            serde_json::from_str(s).map_err(|e| Error::invalid(format!("distribution JSON: {e}")))?;
        spec.try_into()
    }
}
