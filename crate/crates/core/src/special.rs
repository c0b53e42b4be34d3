//! Small special-function helpers shared by the operators.

use statrs::function::erf::erfc;
use std::f64::consts::{PI, SQRT_2};

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln Q(x)` where `Q(x) = P(Z > x)` for a standard normal `Z`.
pub(crate) fn ln_normal_tail(x: f64) -> f64 {
    if x < 30.0 {
        (0.5 * erfc(x / SQRT_2)).ln()
    } else {
        // Asymptotic expansion; erfc underflows past x ≈ 38.
        let x2 = x * x;
        -0.5 * x2 - (x * (2.0 * PI).sqrt()).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// Numerically stable `ln Σ exp(xᵢ)`.
pub(crate) fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalised softmax weights of `xs`, returned together with `ln Σ exp(xᵢ)`.
pub(crate) fn softmax(xs: &[f64]) -> (Vec<f64>, f64) {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    (e.iter().map(|x| x / s).collect(), m + s.ln())
}
