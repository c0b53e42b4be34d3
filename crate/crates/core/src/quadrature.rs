//! Gauss–Hermite rules normalised against a Gaussian density.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::special::log_sum_exp;

/// Largest order for which every weight stays a normal `f64`.
pub const MAX_GH_ORDER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    GaussHermite(usize),
    DiscreteAtoms,
}

/// Nodes and positive weights summing to one.
///
/// A `GaussHermite(n)` rule built for scale `σ` integrates
/// `g ↦ ∫ g(y) N(0, σ²)(dy)` exactly for polynomials of degree `≤ 2n − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kind: QuadratureKind,
}

impl QuadratureRule {
    pub fn from_atoms(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::invalid("atom rule needs matching, non-empty nodes and weights"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invalid("atom weights must be positive"));
        }
        Ok(Self { nodes, weights, kind: QuadratureKind::DiscreteAtoms })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> QuadratureKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// `Σ wᵢ g(xᵢ)`.
    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * g(x)).sum()
    }

    /// Integral against `N(mean, scale²·s²)` where `s` is the scale the rule
    /// was built for: nodes are mapped through `x ↦ mean + scale·x`.
    pub fn integrate_shifted(&self, mean: f64, scale: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * g(mean + scale * x)).sum()
    }

    /// Same weights, nodes mapped through `f` (which must be non-decreasing to
    /// keep the nodes sorted).
    pub fn mapped(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            nodes: self.nodes.iter().map(|x| f(*x)).collect(),
            weights: self.weights.clone(),
            kind: self.kind,
        }
    }

    /// `ln Σ wᵢ exp(g(xᵢ))`, stable for large exponents.
    pub fn log_integrate_exp(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        log_sum_exp(self.iter().map(|(x, w)| w.ln() + g(x)))
    }
}

/// Gauss–Hermite rule of order `n` for the density of `N(0, σ²)`.
pub fn gauss_hermite(n: usize, sigma: f64) -> Result<QuadratureRule> {
    if n < 2 {
        return Err(Error::invalid(format!("Gauss–Hermite order must be at least 2, got {n}")));
    }
    if n > MAX_GH_ORDER {
        return Err(Error::invalid(format!("Gauss–Hermite order {n} exceeds {MAX_GH_ORDER}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("quadrature scale must be positive, got {sigma}")));
    }
    let (x, w) = physicists_hermite(n)?;
    // ∫ g(y) N(0,σ²)(dy) = π^{-1/2} ∫ g(√2 σ x) e^{-x²} dx
    let scale = std::f64::consts::SQRT_2 * sigma;
    let norm = PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = x.iter().zip(&w).map(|(x, w)| (scale * x, w / norm)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nodes, weights) = pairs.into_iter().unzip();
    Ok(QuadratureRule { nodes, weights, kind: QuadratureKind::GaussHermite(n) })
}

/// Nodes and weights for the weight `e^{-x²}`.
///
/// Nodes start from the eigenvalues of the Jacobi matrix (Golub–Welsch) and
/// are polished by Newton steps on the orthonormal Hermite functions
/// `p_k(x)e^{-x²/2}`, which stay in range for every supported order.
/// Weights follow from `w = 2 e^{-x²} / (√(2n) ψ_{n-1}(x))²`.
fn physicists_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let off: Vec<f64> = (1..=n).map(|k| if k < n { (k as f64 / 2.0).sqrt() } else { 0.0 }).collect();
    let mut roots = tridiagonal_eigenvalues(vec![0.0; n], off)?;
    roots.sort_by(f64::total_cmp);
    let nf = n as f64;
    let hermite = |z: f64| {
        let mut p1 = PIM4 * (-0.5 * z * z).exp();
        let mut p2 = 0.0;
        for j in 1..=n {
            let p3 = p2;
            p2 = p1;
            let jf = j as f64;
            p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
        }
        (p1, (2.0 * nf).sqrt() * p2)
    };
    let mut w = vec![0.0; n];
    for (i, z) in roots.iter_mut().enumerate() {
        for _ in 0..3 {
            let (p, dp) = hermite(*z);
            if dp == 0.0 {
                break;
            }
            *z -= p / dp;
        }
        let (_, dp) = hermite(*z);
        w[i] = 2.0 / (dp * dp) * (-*z * *z).exp();
        if !(w[i] > 0.0 && w[i].is_finite()) {
            return Err(Error::Numerical(format!("Gauss–Hermite weight {i} of order {n} is not a positive number")));
        }
    }
    // exact symmetry
    for i in 0..n / 2 {
        let (a, b) = (0.5 * (roots[n - 1 - i] - roots[i]), 0.5 * (w[i] + w[n - 1 - i]));
        roots[i] = -a;
        roots[n - 1 - i] = a;
        w[i] = b;
        w[n - 1 - i] = b;
    }
    if n % 2 == 1 {
        roots[n / 2] = 0.0;
    }
    Ok((roots, w))
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e` (`e[i]` couples `i` and `i+1`, `e[n-1]` unused), by the
/// implicit QL algorithm.
fn tridiagonal_eigenvalues(mut d: Vec<f64>, mut e: Vec<f64>) -> Result<Vec<f64>> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numerical("tridiagonal QL iteration did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(d)
}
