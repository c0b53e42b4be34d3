use kyle_core::bernoulli::BernoulliModel;
use kyle_core::gaussian::GaussianModel;
use kyle_core::grid::GridFunction;
use kyle_core::operator::{
    apply_t, apply_t1, apply_t_with_psi, apply_t2, check_tt_diagnostic, solve_fixed_point, FixedPointOptions,
};
use kyle_core::pair::PsiNode;
use kyle_core::quadrature::gauss_hermite;
use kyle_core::{ModelParams, Phi, ValueDistribution};

fn sup_on(range: f64, g: &GridFunction, f: impl Fn(f64) -> f64) -> f64 {
    g.nodes()
        .zip(g.values())
        .filter(|(y, _)| y.abs() <= range + 1e-12)
        .map(|(y, v)| (v - f(y)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn gaussian_fixed_point_recovers_lambda() {
    let params = ModelParams::new(1.0, 1.5).unwrap();
    let dist = ValueDistribution::gaussian(0.0, 1.0).unwrap();
    let r = solve_fixed_point(&dist, &params, &FixedPointOptions::default()).unwrap();
    assert!(r.residual <= 1e-10);
    assert!((r.lambda_fit - 0.5).abs() < 1e-6, "lambda_fit = {}", r.lambda_fit);
    let g = r.phi_grid().unwrap();
    let err = sup_on(6.0, g, |y| 0.25 * y * y);
    assert!(err < 1e-8, "sup error {err:e}");
    assert!(!r.non_unique);
}

#[test]
fn gaussian_fixed_point_with_mean_and_scale() {
    // σ²λ² + ĉλ − γ² = 0 for σ = 0.8, γ = 1.3, c = 0.9
    let params = ModelParams::with_mean(0.8, 0.9, 0.4).unwrap();
    let dist = ValueDistribution::gaussian(0.4, 1.3).unwrap();
    let r = solve_fixed_point(&dist, &params, &FixedPointOptions::default()).unwrap();
    let model = GaussianModel::new(0.4, 1.3, 0.8, 0.9).unwrap();
    assert!((r.lambda_fit - model.lambda_star).abs() < 1e-6);
    let g = r.phi_grid().unwrap();
    assert!(sup_on(6.0 * 0.8, g, |y| model.phi(y)) < 1e-7);
    assert!(r.uniqueness_gap.unwrap() < 1e-9);
}

#[test]
fn gaussian_phi_is_a_fixed_point_of_t() {
    let params = ModelParams::new(1.0, 1.5).unwrap();
    let dist = ValueDistribution::gaussian(0.0, 1.0).unwrap();
    let phi = GridFunction::tabulate(8.0, 1601, |y| 0.25 * y * y).unwrap();
    let phi = phi.with_values(phi.values().to_vec(), -4.0, 4.0).unwrap();
    let t = apply_t(&phi, &dist, &params, 120).unwrap();
    assert!(sup_on(6.0, &t, |y| 0.25 * y * y) < 1e-8);
}

#[test]
fn gaussian_pair_passes_diagnostic() {
    let m = GaussianModel::from_kappa(1.5, 0.0, 1.0, 1.0).unwrap();
    let d = check_tt_diagnostic(&m.pair(), &m.distribution(), &m.params());
    assert!(d <= 1e-8, "{d:e}");
    let m = GaussianModel::new(-0.7, 2.0, 0.5, 3.0).unwrap();
    assert!(check_tt_diagnostic(&m.pair(), &m.distribution(), &m.params()) <= 1e-8);
}

#[test]
fn t2_of_gaussian_psi_normalises_to_phi() {
    let m = GaussianModel::from_kappa(1.5, 0.0, 1.0, 1.0).unwrap();
    let p = m.params();
    let rule = m.distribution().nodes(120).unwrap();
    let psi: Vec<PsiNode> = rule.iter().map(|(v, weight)| PsiNode { v, weight, psi: m.psi(v) }).collect();
    let at = |y| apply_t2(&psi, &p, y).unwrap();
    assert!((at(2.0) - at(0.0) - 1.0).abs() < 1e-10);
    // the un-normalised value itself is φ*(2) for the exact pair
    assert!((at(2.0) - 1.0).abs() < 1e-10);
}

#[test]
fn bernoulli_cross_validation() {
    let params = ModelParams::new(1.0, 1.0).unwrap();
    let model = BernoulliModel::new(0.5, params).unwrap();
    let rhs = kyle_core::bernoulli::rhs(model.a, 0.5, &params, 120).unwrap();
    assert!((rhs - 1.0).abs() <= 1e-10);
    let r = solve_fixed_point(&model.distribution(), &params, &FixedPointOptions::default()).unwrap();
    assert!(r.residual <= 1e-10);
    let err = sup_on(6.0, r.phi_grid().unwrap(), |y| model.phi(y));
    assert!(err <= 1e-7, "sup error {err:e}");
    let psi = r.pair.psi_nodes().unwrap();
    assert!((psi[0].psi - model.psi0()).abs() < 1e-7);
    assert!((psi[1].psi - model.psi1()).abs() < 1e-7);
}

#[test]
fn bernoulli_pair_is_a_fixed_point() {
    let params = ModelParams::new(1.0, 1.0).unwrap();
    let model = BernoulliModel::new(0.5, params).unwrap();
    let pair = model.pair();
    let dist = model.distribution();
    let d = check_tt_diagnostic(&pair, &dist, &params);
    assert!(d <= 1e-8, "{d:e}");
    let Phi::Grid(g) = &pair.phi else { panic!("tabulated φ expected") };
    let t = apply_t(g, &dist, &params, 120).unwrap();
    assert!(t.sup_distance(g) <= 1e-8);
}

#[test]
fn solver_report_bounds() {
    let params = ModelParams::new(1.0, 1.0).unwrap();
    let dist = ValueDistribution::discrete([(-1.0, 0.3), (0.5, 0.5), (2.0, 0.2)]).unwrap();
    let r = solve_fixed_point(&dist, &params, &FixedPointOptions::default()).unwrap();
    assert!(r.lower_holds);
    // with ĉ = 1 the two upper bounds coincide
    assert_eq!(r.psi_upper_displayed, r.psi_upper_derived);
    assert!(r.upper_derived_holds);
    let psi = r.pair.psi_nodes().unwrap();
    assert!(psi.iter().all(|n| n.psi >= r.psi_lower[0] - 1e-12));
    assert!(!r.non_unique);
    let j = r.to_json(Some("phi.csv"));
    assert_eq!(j["psi"].as_array().unwrap().len(), 3);
    assert_eq!(j["phi_csv_path"], "phi.csv");
}

/// Normalisation, posterior slope/curvature, slope boxing and convexity.
#[test]
fn fixed_point_invariants_for_three_atoms() {
    let params = ModelParams::new(1.2, 0.7).unwrap();
    let chat = params.chat();
    let dist = ValueDistribution::discrete([(-1.0, 0.25), (0.2, 0.45), (1.5, 0.3)]).unwrap();
    let rule = dist.nodes(0).unwrap();
    let opts = FixedPointOptions::default();
    let mut phi = GridFunction::tabulate(8.0 * 1.2, 1601, |_| 0.0).unwrap();
    for _ in 0..6 {
        let (t, psi) = apply_t_with_psi(&phi, &rule, &params).unwrap();
        assert!(t.is_convex());
        assert!(t.left_slope() >= -1.0 && t.right_slope() <= 1.5);
        let h = t.step();
        for i in 1..t.n_points() - 1 {
            let slope = (t.values()[i + 1] - t.values()[i - 1]) / (2.0 * h);
            assert!(slope.abs() <= 1.5 + 1e-9);
        }
        // posterior mean and variance against finite differences of Tφ
        for y in [-5.0, -1.2, 0.0, 0.6, 4.8] {
            let ex: Vec<f64> = psi.iter().map(|n| n.weight.ln() + (y * n.v - n.psi) / chat).collect();
            let m = ex.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = ex.iter().map(|e| (e - m).exp()).collect();
            let s: f64 = w.iter().sum();
            let mean: f64 = psi.iter().zip(&w).map(|(n, w)| n.v * w / s).sum();
            let var: f64 = psi.iter().zip(&w).map(|(n, w)| (n.v - mean).powi(2) * w / s).sum();
            let d = 1e-3;
            let f = |y: f64| apply_t2(&psi, &params, y).unwrap();
            let fd1 = (f(y + d) - f(y - d)) / (2.0 * d);
            let fd2 = (f(y + d) - 2.0 * f(y) + f(y - d)) / (d * d);
            assert!((fd1 - mean).abs() < 1e-6);
            assert!((fd2 - var / chat).abs() < 1e-6);
        }
        phi = t;
    }
    let r = solve_fixed_point(&dist, &params, &opts).unwrap();
    let g = r.phi_grid().unwrap();
    let psi = r.pair.psi_nodes().unwrap();
    for (y, f) in g.nodes().zip(g.values()) {
        let total: f64 = psi.iter().map(|n| n.weight * ((y * n.v - n.psi - f) / chat).exp()).sum();
        assert!((total - 1.0).abs() < 1e-8, "y = {y}: {total}");
    }
    let gh = gauss_hermite(120, params.sigma()).unwrap();
    let lower = -gh.integrate(|y| g.eval(y, 0));
    assert!(psi.iter().all(|n| n.psi >= lower));
    for n in psi {
        assert!((apply_t1(g, &params, n.v).unwrap() - n.psi).abs() < 1e-12);
    }
}

#[test]
fn damped_iteration_reaches_the_same_point() {
    let params = ModelParams::new(1.0, 1.0).unwrap();
    let dist = ValueDistribution::bernoulli(0.3).unwrap();
    let plain = solve_fixed_point(&dist, &params, &FixedPointOptions::default()).unwrap();
    let opts = FixedPointOptions { damping: 0.6, ..Default::default() };
    let damped = solve_fixed_point(&dist, &params, &opts).unwrap();
    assert!(damped.iterations > plain.iterations);
    let (a, b) = (plain.phi_grid().unwrap(), damped.phi_grid().unwrap());
    assert!(a.sup_distance(b) < 1e-9);
}

#[test]
fn small_rate_converges() {
    let params = ModelParams::new(1.0, 0.1).unwrap();
    let dist = ValueDistribution::bernoulli(0.5).unwrap();
    let r = solve_fixed_point(&dist, &params, &FixedPointOptions::default()).unwrap();
    let model = BernoulliModel::new(0.5, params).unwrap();
    assert!(sup_on(6.0, r.phi_grid().unwrap(), |y| model.phi(y)) < 1e-6);
}
