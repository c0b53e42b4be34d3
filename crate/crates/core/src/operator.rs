//! The integral operators
//!
//! ```text
//! T1(φ)(v) = ∫ exp((yv − φ(y))/ĉ) N(0,σ²)(dy)        Ψ = ĉ log T1(φ)
//! T2(Ψ)(y) = ∫ exp((yv − Ψ(v))/ĉ) Π(dv)
//! Tφ       = ĉ log [T2(T1φ) / T2(T1φ)(0)]
//! ```
//!
//! and the iteration `φ_{n+1} = Tφ_n` started from `φ_0 = 0`.
//!
//! `T1` of a tabulated φ is a composite trapezoid rule over the grid nodes
//! plus the two linear tails integrated in closed form. `T2` is an exact sum
//! over the nodes of Π (atoms, or Gauss–Hermite nodes for non-atomic Π).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::distribution::ValueDistribution;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, DEFAULT_HALF_WIDTH, DEFAULT_POINTS};
use crate::pair::{ConvexPair, Phi, Psi, PsiNode};
use crate::params::ModelParams;
use crate::quadrature::{gauss_hermite, QuadratureRule};
use crate::special::{ln_normal_tail, softmax, LN_SQRT_2PI};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// `φ ← (1 − d)φ + d·Tφ`; `1.0` is the plain iteration.
    pub damping: f64,
    /// Gauss–Hermite order used for non-atomic Π and for expectations under
    /// `N(0, σ²)`.
    pub quad_order: usize,
    /// Grid half-width in units of σ.
    pub half_width: f64,
    pub n_points: usize,
    /// Re-run from `φ_0(y) = y·E[V]` and compare.
    pub check_uniqueness: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            damping: 1.0,
            quad_order: 120,
            half_width: DEFAULT_HALF_WIDTH,
            n_points: DEFAULT_POINTS,
            check_uniqueness: true,
        }
    }
}

impl FixedPointOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        if self.max_iter < 1 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid("damping must lie in (0, 1]"));
        }
        if !(self.half_width > 0.0) {
            return Err(Error::invalid("half_width must be positive"));
        }
        if self.n_points < 3 || self.n_points.is_multiple_of(2) {
            return Err(Error::invalid("n_points must be odd and at least 3"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub pair: ConvexPair,
    pub iterations: usize,
    /// `‖Tφ − φ‖∞` on the grid at the last iteration.
    pub residual: f64,
    pub history: Vec<f64>,
    /// `−E[φ(σB₁)]`, one entry per node of Π.
    pub psi_lower: Vec<f64>,
    /// `(v − φ'(0))²/(2c²σ²)`, the upper bound as usually displayed.
    pub psi_upper_displayed: Vec<f64>,
    /// `(v − φ'(0))²/(2c)`, the bound its derivation actually produces.
    pub psi_upper_derived: Vec<f64>,
    pub lower_holds: bool,
    pub upper_displayed_holds: bool,
    pub upper_derived_holds: bool,
    /// Coefficient `a` of the least-squares fit `a·y²/2 + b·y + c` on `|y| ≤ 6σ`.
    pub lambda_fit: f64,
    /// Sup distance between the runs from `φ_0 = 0` and `φ_0 = y·E[V]`.
    pub uniqueness_gap: Option<f64>,
    pub non_unique: bool,
    /// The second solution, kept only when it differs.
    pub alternate: Option<ConvexPair>,
}

impl FixedPointReport {
    pub fn phi_grid(&self) -> Option<&GridFunction> {
        match &self.pair.phi {
            Phi::Grid(g) => Some(g),
            Phi::Quadratic { .. } => None,
        }
    }

    pub fn psi_values(&self) -> Vec<[f64; 2]> {
        self.pair.psi_nodes().map(|n| n.iter().map(|n| [n.v, n.psi]).collect()).unwrap_or_default()
    }

    pub fn to_json(&self, phi_csv_path: Option<&str>) -> serde_json::Value {
        json!({
            "lambda_fit": self.lambda_fit,
            "residual": self.residual,
            "iterations": self.iterations,
            "phi_csv_path": phi_csv_path,
            "psi": self.psi_values(),
            "psi_lower": self.psi_lower,
            "psi_upper_displayed": self.psi_upper_displayed,
            "psi_upper_derived": self.psi_upper_derived,
            "lower_holds": self.lower_holds,
            "upper_displayed_holds": self.upper_displayed_holds,
            "upper_derived_holds": self.upper_derived_holds,
            "uniqueness_gap": self.uniqueness_gap,
            "non_unique": self.non_unique,
        })
    }
}

/// `ln T1(φ)(v)` for a tabulated φ.
fn log_t1_grid(phi: &GridFunction, params: &ModelParams, v: f64) -> f64 {
    let chat = params.chat();
    let sigma = params.sigma();
    let h = phi.step();
    let n = phi.n_points();
    let ln_dens = -sigma.ln() - LN_SQRT_2PI;
    let mut terms = Vec::with_capacity(n + 2);
    for (i, (y, f)) in phi.nodes().zip(phi.values()).enumerate() {
        let trap = if i == 0 || i == n - 1 { 0.5 * h } else { h };
        terms.push(trap.ln() + ln_dens + (y * v - f) / chat - 0.5 * y * y / (sigma * sigma));
    }
    // φ(y) = φ_R + s (y − Y_R) beyond Y_R, so the tail integrand is
    // exp((s Y_R − φ_R)/ĉ) · exp(b y) · N(0,σ²) with b = (v − s)/ĉ.
    let (yr, fr, sr) = (phi.y_max(), phi.values()[n - 1], phi.right_slope());
    let b = (v - sr) / chat;
    terms.push((sr * yr - fr) / chat + 0.5 * b * b * sigma * sigma + ln_normal_tail((yr - b * sigma * sigma) / sigma));
    let (yl, fl, sl) = (phi.y_min(), phi.values()[0], phi.left_slope());
    let b = (v - sl) / chat;
    terms.push((sl * yl - fl) / chat + 0.5 * b * b * sigma * sigma + ln_normal_tail((b * sigma * sigma - yl) / sigma));
    softmax(&terms).1
}

/// `ln T1(φ)(v)` for `φ(y) = λy²/2 + μy`, in closed form.
fn log_t1_quadratic(lambda: f64, mu: f64, params: &ModelParams, v: f64) -> f64 {
    let chat = params.chat();
    let s2 = params.sigma() * params.sigma();
    let precision = 1.0 / s2 + lambda / chat;
    if !(precision > 0.0) {
        // the Gaussian integral diverges
        return f64::INFINITY;
    }
    let b = (v - mu) / chat;
    -0.5 * (s2 * precision).ln() + 0.5 * b * b / precision
}

fn check_finite(x: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::domain(what()))
    }
}

/// `Ψ(v) = ĉ log T1(φ)(v)` for a tabulated φ with linear tails.
///
/// The Gaussian factor keeps the tail integrals finite for every `v`, so the
/// only failure is floating-point overflow, reported as a domain error.
pub fn apply_t1(phi: &GridFunction, params: &ModelParams, v: f64) -> Result<f64> {
    let out = params.chat() * log_t1_grid(phi, params, v);
    check_finite(out, || {
        format!(
            "T1 is not finite at v = {v} (tail slopes {}, {})",
            phi.left_slope(),
            phi.right_slope()
        )
    })
}

/// `ĉ log T1(φ)(v)` for an arbitrary φ, by quadrature against `N(0, σ²)`.
///
/// `quad` must be a rule built for scale σ.
pub fn apply_t1_fn(phi: impl Fn(f64) -> f64, params: &ModelParams, quad: &QuadratureRule, v: f64) -> Result<f64> {
    let chat = params.chat();
    let out = chat * quad.log_integrate_exp(|y| (y * v - phi(y)) / chat);
    check_finite(out, || format!("T1 is not finite at v = {v}"))
}

/// Weighted log-sum `ln Σ wᵢ exp((y vᵢ − Ψᵢ)/ĉ)` and the posterior mean of V.
fn log_t2_nodes(psi: &[PsiNode], chat: f64, y: f64) -> (f64, f64) {
    let ex: Vec<f64> = psi.iter().map(|n| n.weight.ln() + (y * n.v - n.psi) / chat).collect();
    let (w, lse) = softmax(&ex);
    let mean = psi.iter().zip(&w).map(|(n, w)| w * n.v).sum();
    (lse, mean)
}

/// Un-normalised `φ̃(y) = ĉ log T2(Ψ)(y)`, an exact sum over the nodes.
pub fn apply_t2(psi: &[PsiNode], params: &ModelParams, y: f64) -> Result<f64> {
    if psi.is_empty() {
        return Err(Error::invalid("T2 needs at least one node"));
    }
    let out = params.chat() * log_t2_nodes(psi, params.chat(), y).0;
    check_finite(out, || format!("T2 is not finite at y = {y}"))
}

/// Ψ at every node of `rule`.
pub fn psi_on_nodes(phi: &GridFunction, rule: &QuadratureRule, params: &ModelParams) -> Result<Vec<PsiNode>> {
    rule.nodes()
        .par_iter()
        .zip(rule.weights().par_iter())
        .map(|(&v, &weight)| Ok(PsiNode { v, weight, psi: apply_t1(phi, params, v)? }))
        .collect()
}

/// `ĉ log T2(Ψ)` tabulated on the nodes of `template`, shifted to vanish at 0,
/// with tail slopes equal to the posterior means at the end nodes.
fn normalised_t2(psi: &[PsiNode], template: &GridFunction, params: &ModelParams) -> Result<GridFunction> {
    let chat = params.chat();
    let ys: Vec<f64> = template.nodes().collect();
    let evals: Vec<(f64, f64)> = ys.par_iter().map(|&y| log_t2_nodes(psi, chat, y)).collect();
    let zero = evals[template.zero_index()].0;
    let mut values = Vec::with_capacity(ys.len());
    for ((lse, _), y) in evals.iter().zip(&ys) {
        let v = chat * (lse - zero);
        values.push(check_finite(v, || format!("T2 is not finite at y = {y}"))?);
    }
    values[template.zero_index()] = 0.0;
    template.with_values(values, evals[0].1, evals[evals.len() - 1].1)
}

/// One application of `T`, returning `Tφ` and the intermediate `Ψ = ĉ log T1φ`.
pub fn apply_t_with_psi(
    phi: &GridFunction,
    rule: &QuadratureRule,
    params: &ModelParams,
) -> Result<(GridFunction, Vec<PsiNode>)> {
    let psi = psi_on_nodes(phi, rule, params)?;
    let t = normalised_t2(&psi, phi, params)?;
    Ok((t, psi))
}

/// `Tφ = ĉ log [T2(T1φ) / T2(T1φ)(0)]` on the grid of `phi`.
pub fn apply_t(phi: &GridFunction, dist: &ValueDistribution, params: &ModelParams, quad_order: usize) -> Result<GridFunction> {
    let rule = dist.nodes(quad_order)?;
    Ok(apply_t_with_psi(phi, &rule, params)?.0)
}

/// `T̃Ψ = ĉ log [T1(T2Ψ) / T1(T2Ψ)(0)]` at the same nodes as `psi`; the
/// inner `T2Ψ` is tabulated on the grid of `template`.
pub fn apply_t_tilde(psi: &[PsiNode], template: &GridFunction, params: &ModelParams) -> Result<Vec<PsiNode>> {
    let phi = normalised_t2(psi, template, params)?;
    // the normalising shift of φ cancels in the ratio, so it is harmless here
    let at_zero = apply_t1(&phi, params, 0.0)?;
    psi.iter()
        .map(|n| Ok(PsiNode { psi: apply_t1(&phi, params, n.v)? - at_zero, ..*n }))
        .collect()
}

/// Sup-norm deviation of the pair from the two identities
/// `Ψ = ĉ log T1(φ)` (over the nodes of Π) and `φ = ĉ log T2(Ψ)` (over the
/// grid, or over `[−8σ, 8σ]` for a closed-form φ). No normalising constant is
/// removed, so a shift `Ψ + k` reports `|k|`.
///
/// A closed-form Ψ paired with a non-Gaussian Π is not a meaningful input
/// and yields `+∞`.
pub fn check_tt_diagnostic(pair: &ConvexPair, dist: &ValueDistribution, params: &ModelParams) -> f64 {
    check_tt_inner(pair, dist, params).unwrap_or(f64::INFINITY)
}

fn check_tt_inner(pair: &ConvexPair, dist: &ValueDistribution, params: &ModelParams) -> Result<f64> {
    let chat = params.chat();
    let log_t1 = |v: f64| match &pair.phi {
        Phi::Quadratic { lambda, mu } => log_t1_quadratic(*lambda, *mu, params, v),
        Phi::Grid(g) => log_t1_grid(g, params, v),
    };
    let first = match &pair.psi {
        Psi::Nodes(nodes) => nodes.iter().map(|n| (chat * log_t1(n.v) - n.psi).abs()).fold(0.0, f64::max),
        Psi::Gaussian { .. } => {
            let rule = dist.nodes(40)?;
            rule.nodes()
                .iter()
                .map(|&v| (chat * log_t1(v) - pair.psi_known(v).unwrap_or(f64::NAN)).abs())
                .fold(0.0, f64::max)
        }
    };
    let ys: Vec<(f64, f64)> = match &pair.phi {
        Phi::Grid(g) => g.nodes().zip(g.values().iter().copied()).collect(),
        Phi::Quadratic { .. } => {
            let hw = DEFAULT_HALF_WIDTH * params.sigma();
            (0..=320).map(|i| -hw + i as f64 * hw / 160.0).map(|y| (y, pair.phi(y))).collect()
        }
    };
    let log_t2 = |y: f64| -> Result<f64> {
        match (&pair.psi, dist) {
            (Psi::Nodes(nodes), _) => Ok(log_t2_nodes(nodes, chat, y).0),
            (Psi::Gaussian { mu: m, c, lambda }, ValueDistribution::Gaussian { mu, gamma }) => {
                let k = pair.psi_known(*m).expect("closed form");
                let g2 = gamma * gamma;
                let q = 1.0 / (chat * (c + lambda));
                let prec = q + 1.0 / g2;
                let lin = y / chat + m * q + mu / g2;
                let cst = 0.5 * m * m * q + 0.5 * mu * mu / g2;
                Ok(-(gamma * prec.sqrt()).ln() + 0.5 * lin * lin / prec - cst - k / chat)
            }
            _ => Err(Error::invalid("closed-form Ψ requires a Gaussian value distribution")),
        }
    };
    let mut second: f64 = 0.0;
    for (y, f) in ys {
        second = second.max((chat * log_t2(y)? - f).abs());
    }
    let d = first.max(second);
    if d.is_nan() {
        return Err(Error::Numerical("diagnostic is NaN".into()));
    }
    Ok(d)
}

fn grid_for(params: &ModelParams, opts: &FixedPointOptions, f: impl Fn(f64) -> f64, slope: (f64, f64)) -> Result<GridFunction> {
    let g = GridFunction::tabulate(opts.half_width * params.sigma(), opts.n_points, f)?;
    g.with_values(g.values().to_vec(), slope.0, slope.1)
}

struct RunOutcome {
    phi: GridFunction,
    psi: Vec<PsiNode>,
    iterations: usize,
    residual: f64,
    history: Vec<f64>,
}

fn iterate(mut phi: GridFunction, rule: &QuadratureRule, params: &ModelParams, opts: &FixedPointOptions) -> Result<RunOutcome> {
    let mut history = Vec::new();
    for k in 1..=opts.max_iter {
        let (t, _) = apply_t_with_psi(&phi, rule, params)?;
        let residual = t.sup_distance(&phi);
        if !residual.is_finite() {
            return Err(Error::Numerical(format!("residual is not finite at iteration {k}")));
        }
        history.push(residual);
        if residual <= opts.tol {
            let psi = psi_on_nodes(&t, rule, params)?;
            return Ok(RunOutcome { phi: t, psi, iterations: k, residual, history });
        }
        phi = if opts.damping == 1.0 {
            t
        } else {
            let d = opts.damping;
            let blend = |a: f64, b: f64| (1.0 - d) * a + d * b;
            let values = phi.values().iter().zip(t.values()).map(|(a, b)| blend(*a, *b)).collect();
            phi.with_values(
                values,
                blend(phi.left_slope(), t.left_slope()),
                blend(phi.right_slope(), t.right_slope()),
            )?
        };
    }
    let residual = history.last().copied().unwrap_or(f64::NAN);
    Err(Error::NonConvergence { iterations: opts.max_iter, residual, history })
}

/// Iterates `φ_{n+1} = Tφ_n` from `φ_0 = 0` until `‖Tφ − φ‖∞ ≤ tol`.
///
/// A point mass `δ_{v₀}` short-circuits to the exact fixed point `φ = y·v₀`,
/// `Ψ(v₀) = 0`.
pub fn solve_fixed_point(dist: &ValueDistribution, params: &ModelParams, opts: &FixedPointOptions) -> Result<FixedPointReport> {
    opts.validate()?;
    if let ValueDistribution::QuantileMap { support_bound: None, .. } = dist {
        return Err(Error::invalid("quantile-map distributions must declare a support bound"));
    }
    let rule = dist.nodes(opts.quad_order)?;
    let chat = params.chat();

    let (phi, psi, iterations, residual, history, uniqueness_gap, alternate) = if let Some(v0) = dist.point_mass_value() {
        let phi = grid_for(params, opts, |y| y * v0, (v0, v0))?;
        let psi = vec![PsiNode { v: v0, weight: 1.0, psi: 0.0 }];
        (phi, psi, 1, 0.0, vec![0.0], None, None)
    } else {
        let start = grid_for(params, opts, |_| 0.0, (0.0, 0.0))?;
        let main = iterate(start, &rule, params, opts)?;
        let m = dist.mean();
        let (gap, alt) = if opts.check_uniqueness && m != 0.0 {
            let start = grid_for(params, opts, |y| y * m, (m, m))?;
            let other = iterate(start, &rule, params, opts)?;
            let gap = other.phi.sup_distance(&main.phi);
            (Some(gap), Some(other))
        } else if opts.check_uniqueness {
            // both starting points coincide and the iteration is deterministic
            (Some(0.0), None)
        } else {
            (None, None)
        };
        (main.phi, main.psi, main.iterations, main.residual, main.history, gap, alt)
    };

    let non_unique = uniqueness_gap.is_some_and(|g| g > 10.0 * opts.tol);
    let alternate = match alternate {
        Some(o) if non_unique => Some(ConvexPair::new(Phi::Grid(o.phi), Psi::Nodes(o.psi), chat)?),
        _ => None,
    };

    let gh = gauss_hermite(opts.quad_order, params.sigma())?;
    let lower = -gh.integrate(|y| phi.eval(y, 0));
    let slope0 = phi.eval(0.0, 1);
    let c = params.c();
    let s2 = params.sigma() * params.sigma();
    let psi_lower = vec![lower; psi.len()];
    let psi_upper_displayed: Vec<f64> = psi.iter().map(|n| (n.v - slope0).powi(2) / (2.0 * c * c * s2)).collect();
    let psi_upper_derived: Vec<f64> = psi.iter().map(|n| (n.v - slope0).powi(2) / (2.0 * c)).collect();
    let slack = 1e-9;
    let lower_holds = psi.iter().all(|n| n.psi >= lower - slack);
    let upper_displayed_holds = psi.iter().zip(&psi_upper_displayed).all(|(n, u)| n.psi <= u + slack);
    let upper_derived_holds = psi.iter().zip(&psi_upper_derived).all(|(n, u)| n.psi <= u + slack);
    let lambda_fit = phi.fit_quadratic(6.0 * params.sigma()).0;

    Ok(FixedPointReport {
        pair: ConvexPair::new(Phi::Grid(phi), Psi::Nodes(psi), chat)?,
        iterations,
        residual,
        history,
        psi_lower,
        psi_upper_displayed,
        psi_upper_derived,
        lower_holds,
        upper_displayed_holds,
        upper_derived_holds,
        lambda_fit,
        uniqueness_gap,
        non_unique,
        alternate,
    })
}
