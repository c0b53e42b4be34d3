use kyle_core::bernoulli::BernoulliModel;
use kyle_core::gaussian::GaussianModel;
use kyle_core::operator::{solve_fixed_point, FixedPointOptions};
use kyle_core::quadrature::gauss_hermite;
use kyle_core::{EquilibriumModel, KernelMode, ModelParams, ValueDistribution};
use proptest::prelude::*;

fn gaussian() -> (GaussianModel, EquilibriumModel) {
    let m = GaussianModel::from_kappa(1.5, 0.0, 1.0, 1.0).unwrap();
    (m, EquilibriumModel::gaussian(&m))
}

fn coin() -> (BernoulliModel, EquilibriumModel) {
    let m = BernoulliModel::new(0.5, ModelParams::new(1.0, 1.0).unwrap()).unwrap();
    let em = EquilibriumModel::bernoulli(&m).unwrap();
    (m, em)
}

fn mesh() -> impl Iterator<Item = (f64, f64)> {
    (0..51).flat_map(|i| (0..201).map(move |j| (i as f64 / 50.0, -4.0 + 8.0 * j as f64 / 200.0)))
}

#[test]
fn normalisation_on_full_mesh() {
    for em in [gaussian().1, coin().1] {
        let mut worst = 0.0f64;
        for (t, y) in mesh() {
            worst = worst.max((em.normalization(t, y).unwrap() - 1.0).abs());
        }
        assert!(worst < 1e-8, "worst deviation {worst:e}");
    }
}

#[test]
fn gaussian_specialisation() {
    let (m, em) = gaussian();
    let quad = em.clone().with_mode(KernelMode::Quadrature);
    for t in [0.0, 0.25, 0.5, 0.8, 0.99] {
        for y in [-2.0, -0.4, 0.0, 1.1, 2.5] {
            for v in [-1.5, 0.0, 0.3, 2.0] {
                let rho = m.rho(t, y, v).unwrap();
                assert!((em.rho_star(t, y, v).unwrap() - rho).abs() < 1e-7);
                assert!((quad.rho_star(t, y, v).unwrap() - rho).abs() < 1e-7);
                let l = m.big_lambda();
                let closed = l * ((v - m.mu) / m.gamma - l * y / m.sigma) / (1.0 - t * l * l) * m.sigma;
                assert!((em.alpha_star(t, y, v).unwrap() - closed).abs() < 1e-7);
                assert!((quad.alpha_star(t, y, v).unwrap() - closed).abs() < 1e-7);
            }
            assert!((quad.pricing_rule_h(t, y).unwrap() - (m.lambda_star * y + m.mu)).abs() < 1e-7);
            let cv = m.conditional_variance(t).unwrap();
            assert!((em.conditional_variance(t, y).unwrap() - cv).abs() < 1e-7);
        }
    }
    let s = m.summary();
    assert!((em.noise_loss() - s.noise_loss).abs() < 1e-12);
    assert!((em.price_inefficiency() - s.inefficiency_delta).abs() < 1e-12);
    assert!((em.expected_penalty() - s.expected_penalty).abs() < 1e-8);
    assert!((em.insider_wealth() - s.insider_wealth_exante).abs() < 1e-8);
}

#[test]
fn penalty_integrates_to_entropy() {
    let (m, em) = gaussian();
    let s = m.summary();
    assert!((em.average_entropy() - s.avg_entropy).abs() < 1e-8);
    let chat = m.chat();
    assert!((em.expected_penalty() - chat * s.avg_entropy).abs() < 1e-8);
    assert!((chat * s.avg_entropy + 0.5 * chat * (1.0 - 0.25f64).ln()).abs() < 1e-15);
}

#[test]
fn inefficiency_is_rate_times_noise_loss() {
    for em in [gaussian().1, coin().1] {
        let c = em.params().c();
        assert!((em.price_inefficiency() - c * em.noise_loss()).abs() < 1e-9);
        assert!(em.noise_loss() > 0.0);
    }
}

#[test]
fn bernoulli_terminal_price_is_posterior_probability() {
    let (m, em) = coin();
    for y in [-4.0, -1.0, 0.0, 0.5, 3.0] {
        let rho = em.rho_star(1.0, y, 1.0).unwrap();
        assert!((m.h(y) - rho * 0.5).abs() < 1e-9);
        assert!((em.pricing_rule_h(1.0, y).unwrap() - m.h(y)).abs() < 1e-9);
        // ĉφ'' = Var(V | Y₁ = y) = h(1 − h)
        let var = em.conditional_variance(1.0, y).unwrap();
        assert!((var - m.h(y) * (1.0 - m.h(y))).abs() < 1e-8);
    }
}

#[test]
fn bernoulli_insider_value() {
    let (m, em) = coin();
    let gh = gauss_hermite(120, 1.0).unwrap();
    let e_phi = gh.integrate(|y| m.phi(y));
    assert!((em.insider_value(1.0) - (-m.a.ln() + e_phi)).abs() < 1e-9);
    assert!(em.insider_value(1.0) >= 0.0 && em.insider_value(0.0) >= 0.0);
    // value written as E[j*(σB₁, v)]: the −yv term has mean zero
    for v in [0.0, 1.0] {
        let j = gh.integrate(|y| em.psi(v) + m.phi(y) - y * v);
        assert!((j - em.insider_value(v)).abs() < 1e-12);
    }
}

#[test]
fn entropy_is_non_negative() {
    for em in [gaussian().1, coin().1] {
        for n in em.pi_nodes().iter().filter(|n| n.weight > 1e-12) {
            assert!(em.expected_penalty_per_v(n.v) >= -1e-10, "v = {}", n.v);
        }
    }
    let (_, em) = coin();
    assert!(em.expected_penalty_per_v(1.0) > 1e-3);
}

#[test]
fn terminal_consistency() {
    let (_, em) = coin();
    let chat = em.params().chat();
    for y in [-3.0, -0.5, 0.0, 0.7, 2.0] {
        assert!((em.pricing_rule_h(1.0, y).unwrap() - em.pair().phi_prime(y)).abs() < 1e-8);
        // Var(V | Y₁ = y) from the posterior weights
        let w = em.pair().posterior_weights(y).unwrap();
        let nodes = em.pi_nodes();
        let mean: f64 = nodes.iter().zip(&w).map(|(n, w)| n.v * w).sum();
        let var: f64 = nodes.iter().zip(&w).map(|(n, w)| (n.v - mean).powi(2) * w).sum();
        assert!((chat * em.pair().phi_second(y) - var).abs() < 1e-8);
    }
}

#[test]
fn prices_are_martingales() {
    let (_, em) = coin();
    let gh = gauss_hermite(60, 1.0).unwrap();
    for (s, t) in [(0.0f64, 0.5f64), (0.2, 0.9), (0.5, 1.0)] {
        for y in [-1.5, 0.0, 0.8] {
            let sd = (t - s).sqrt();
            let smoothed = gh.integrate_shifted(y, sd, |x| em.pricing_rule_h(t, x).unwrap());
            assert!((smoothed - em.pricing_rule_h(s, y).unwrap()).abs() < 1e-8);
        }
    }
    assert!((em.pricing_rule_h(0.0, 0.0).unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn pricing_rule_shape() {
    let (_, em) = coin();
    let quad = em.clone().with_mode(KernelMode::Quadrature);
    for t in [0.0, 0.4, 0.95] {
        let mut prev = f64::NEG_INFINITY;
        for j in 0..41 {
            let y = -4.0 + 0.2 * j as f64;
            let h = em.pricing_rule_h(t, y).unwrap();
            assert!(h > prev && h > 0.0 && h < 1.0);
            assert!((quad.pricing_rule_h(t, y).unwrap() - h).abs() < 1e-8);
            prev = h;
        }
    }
}

#[test]
fn strategy_is_centred() {
    for em in [gaussian().1, coin().1] {
        for t in [0.0, 0.3, 0.9] {
            for y in [-2.0, 0.0, 1.3] {
                assert!(em.strategy_centering(t, y).unwrap().abs() < 1e-8);
            }
        }
    }
}

#[test]
fn value_function_properties() {
    for em in [gaussian().1, coin().1] {
        for n in em.pi_nodes().iter().filter(|n| n.weight > 1e-6) {
            assert_eq!(em.value_function_j(1.0, 0.4, n.v).unwrap(), 0.0);
            let j0 = em.value_function_j(0.0, 0.0, n.v).unwrap();
            assert!((j0 - em.insider_value(n.v)).abs() < 1e-8);
            for (t, y) in [(0.2, -1.0), (0.6, 0.5), (0.9, 2.0)] {
                assert!(em.value_function_j(t, y, n.v).unwrap() >= -1e-10);
            }
        }
    }
    let (_, em) = coin();
    for (t, y) in [(0.3, -0.5), (0.5, 0.7), (0.8, 1.5)] {
        for v in [0.0, 1.0] {
            assert!(em.hjb_residual(t, y, v).unwrap().abs() < 1e-4);
        }
    }
}

#[test]
fn solved_pair_feeds_analytics() {
    let params = ModelParams::new(1.0, 1.0).unwrap();
    let dist = ValueDistribution::discrete([(-1.0, 0.3), (0.5, 0.5), (2.0, 0.2)]).unwrap();
    let r = solve_fixed_point(&dist, &params, &FixedPointOptions::default()).unwrap();
    let em = EquilibriumModel::from_report(&r, dist, params).unwrap();
    assert!(em.pair_deviation() < 1e-8);
    for (t, y) in [(0.0, 0.0), (0.5, 1.0), (0.99, -2.0)] {
        assert!((em.normalization(t, y).unwrap() - 1.0).abs() < 1e-8);
        let h = em.pricing_rule_h(t, y).unwrap();
        assert!((-1.0..=2.0).contains(&h));
    }
    assert!((em.pricing_rule_h(0.0, 0.0).unwrap() - 0.35).abs() < 1e-9);
}

#[test]
fn rejects_terminal_strategy() {
    let (_, em) = coin();
    assert!(em.alpha_star(1.0, 0.0, 1.0).is_err());
    assert!(em.rho_star(1.5, 0.0, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hjb_residual_vanishes_in_gaussian_model(t in 0.05f64..0.9, y in -3.0f64..3.0, v in -2.0f64..2.0,
                                                kappa in 0.2f64..5.0) {
        let m = GaussianModel::from_kappa(kappa, 0.0, 1.0, 1.0).unwrap();
        let em = EquilibriumModel::gaussian(&m);
        prop_assert!(em.hjb_residual(t, y, v).unwrap().abs() <= 1e-4);
    }
}
