use kyle_core::gaussian::{penalty_argmax_kappa, penalty_convexity_switch_kappa, sweep, SWEEP_HEADER};
use kyle_core::operator::solve_fixed_point;
use kyle_core::sim::{mc_report, simulate};
use kyle_core::{BernoulliModel, EquilibriumModel, GaussianModel, GridFunction, ValueDistribution};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::Sink;
use crate::CliError;

fn grid_rows(g: &GridFunction) -> impl Iterator<Item = String> + '_ {
    g.nodes().zip(g.values()).map(|(y, v)| format!("{y},{v}"))
}

fn gaussian_model(cfg: &RunConfig) -> Option<Result<GaussianModel, CliError>> {
    let (mu, gamma) = cfg.gaussian()?;
    Some(GaussianModel::new(mu, gamma, cfg.model.sigma, cfg.c()).map_err(CliError::from))
}

/// Closed form for Gaussian fundamentals, otherwise the solved fixed point.
fn equilibrium(cfg: &RunConfig) -> Result<EquilibriumModel, CliError> {
    if let Some(g) = gaussian_model(cfg) {
        return Ok(EquilibriumModel::gaussian(&g?));
    }
    let dist = cfg.distribution()?;
    let params = cfg.params()?;
    let report = solve_fixed_point(&dist, &params, &cfg.solver)?;
    Ok(EquilibriumModel::from_report(&report, dist, params)?)
}

pub fn solve(cfg: &RunConfig, sink: &Sink) -> Result<Value, CliError> {
    let dist = cfg.distribution()?;
    let params = cfg.params()?;
    let report = solve_fixed_point(&dist, &params, &cfg.solver)?;
    let phi = match report.phi_grid() {
        Some(g) => g.clone(),
        None => {
            let w = cfg.solver.half_width * params.sigma();
            GridFunction::tabulate(w, cfg.solver.n_points, |y| report.pair.phi(y))?
        }
    };
    let path = sink.csv("phi.csv", "y,value", grid_rows(&phi))?;
    sink.json("fixed_point.json", report.to_json(path.as_deref()))
}

pub fn gaussian(cfg: &RunConfig, sink: &Sink) -> Result<Value, CliError> {
    let model = gaussian_model(cfg).ok_or_else(|| CliError::config("gaussian requires a Gaussian distribution"))??;
    let mut doc = serde_json::to_value(model.summary()).expect("summary serialises");
    doc["kappa"] = json!(model.kappa_rate);
    sink.json("gaussian_summary.json", doc)
}

pub fn bernoulli(cfg: &RunConfig, sink: &Sink) -> Result<Value, CliError> {
    let p = match cfg.distribution()? {
        ValueDistribution::Discrete { atoms } if atoms.len() == 2 && atoms[0].0 == 0.0 && atoms[1].0 == 1.0 => atoms[1].1,
        _ => return Err(CliError::config("bernoulli requires atoms {0, 1}; use --p")),
    };
    let params = cfg.params()?;
    let model = BernoulliModel::with_quad_order(p, params, cfg.solver.quad_order)?;
    let w = cfg.solver.half_width * params.sigma();
    let phi = GridFunction::tabulate(w, cfg.solver.n_points, |y| model.phi(y))?;
    let path = sink.csv("phi.csv", "y,value", grid_rows(&phi))?;
    let doc = json!({
        "p": p,
        "a": model.a,
        "psi0": model.psi0(),
        "psi1": model.psi1(),
        "phi_csv_path": path,
    });
    sink.json("bernoulli.json", doc)
}

#[derive(Debug, Clone, Copy)]
pub struct Mesh {
    pub nt: usize,
    pub ny: usize,
    /// Half-width of the y range in units of σ.
    pub y_half_width: f64,
}

pub fn analyze(cfg: &RunConfig, sink: &Sink, mesh: Mesh) -> Result<Value, CliError> {
    if mesh.nt < 2 || mesh.ny < 2 || !(mesh.y_half_width > 0.0) {
        return Err(CliError::config("mesh needs nt ≥ 2, ny ≥ 2 and a positive y range"));
    }
    let em = equilibrium(cfg)?;
    let vs: Vec<f64> = match cfg.gaussian() {
        Some((mu, gamma)) => (-6..=6).map(|k| mu + 0.5 * k as f64 * gamma).collect(),
        None => em.pi_nodes().iter().map(|n| n.v).collect(),
    };
    let w = mesh.y_half_width * cfg.model.sigma;
    let mut points = Vec::with_capacity(mesh.nt * mesh.ny);
    for i in 0..mesh.nt {
        for j in 0..mesh.ny {
            let t = i as f64 / (mesh.nt - 1) as f64;
            let y = -w + 2.0 * w * j as f64 / (mesh.ny - 1) as f64;
            points.push((t, y));
        }
    }
    let mut h_rows = Vec::with_capacity(points.len());
    let mut a_rows = Vec::with_capacity(points.len() * vs.len());
    for &(t, y) in &points {
        h_rows.push(format!("{t},{y},{}", em.pricing_rule_h(t, y)?));
        // the trading rate is only defined before maturity
        if t >= 1.0 {
            continue;
        }
        for &v in &vs {
            a_rows.push(format!("{t},{y},{v},{}", em.alpha_star(t, y, v)?));
        }
    }
    let h_path = sink.csv("H_surface.csv", "t,y,H", h_rows)?;
    let a_path = sink.csv("alpha_surface.csv", "t,y,v,alpha", a_rows)?;
    let doc = json!({
        "value": vs.iter().map(|&v| [v, em.insider_value(v)]).collect::<Vec<_>>(),
        "penalty": vs.iter().map(|&v| [v, em.expected_penalty_per_v(v)]).collect::<Vec<_>>(),
        "insider_wealth": em.insider_wealth(),
        "expected_penalty": em.expected_penalty(),
        "noise_loss": em.noise_loss(),
        "delta": em.price_inefficiency(),
        "H_surface_csv": h_path,
        "alpha_surface_csv": a_path,
    });
    sink.json("analysis.json", doc)
}

pub fn simulate_cmd(cfg: &RunConfig, sink: &Sink) -> Result<Value, CliError> {
    let em = equilibrium(cfg)?;
    let sim = cfg.sim_or_default();
    let report = mc_report(&simulate(&em, &sim)?, &em);
    sink.json("mc_report.json", report.to_json())
}

#[derive(Debug, Clone, Copy)]
pub struct SweepGrid {
    pub points: usize,
    pub kappa_min: f64,
    pub kappa_max: f64,
}

pub fn sweep_cmd(sink: &Sink, grid: SweepGrid) -> Result<Value, CliError> {
    let rows = sweep(grid.kappa_min, grid.kappa_max, grid.points)?;
    let path = sink.csv("sweep.csv", SWEEP_HEADER, rows.iter().map(|r| r.csv_line()))?;
    let max = rows.iter().max_by(|a, b| a.penalty.total_cmp(&b.penalty)).expect("sweep is non-empty");
    let doc = json!({
        "sweep_csv": path,
        "points": rows.len(),
        "penalty_first": rows[0].penalty,
        "penalty_last": rows[rows.len() - 1].penalty,
        "penalty_max": max.penalty,
        "penalty_argmax_kappa": penalty_argmax_kappa(),
        "penalty_convexity_switch_kappa": penalty_convexity_switch_kappa(),
        "rows": if sink.wants_csv() { Value::Null } else { serde_json::to_value(&rows).expect("rows serialise") },
    });
    sink.json("sweep.json", doc)
}
