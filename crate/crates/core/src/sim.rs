//! Euler–Maruyama simulation of the equilibrium demand
//!
//! ```text
//! dY_t = α*(t, Y_t, V) dt + σ dB_t,    Y_0 = 0,
//! ```
//!
//! with Monte Carlo estimates of the insider's wealth and penalty, the noise
//! traders' loss and diagnostics of the Brownian character of `Y/σ`.
//!
//! Randomness is organised so that results depend only on the seed and the
//! configuration: every path owns a ChaCha8 stream, and Brownian paths are
//! built dyadically (an odd number of base increments, then Brownian-bridge
//! refinements), so runs with `n` and `2n` steps share the same paths.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analytics::EquilibriumModel;
use crate::distribution::ValueDistribution;
use crate::error::{Error, Result};
use crate::gaussian::{speed_of_mean_reversion, GaussianModel};
use crate::pair::Phi;

const CHUNK: usize = 1000;
/// Stream family reserved for drawing `V`.
const VALUE_LEVEL: u64 = u64::MAX;
/// Largest tolerated fraction of paths with a failed drift evaluation.
pub const MAX_FLAGGED_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "v", rename_all = "snake_case")]
pub enum VMode {
    FixedV(f64),
    SampleFromPi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub v_mode: VMode,
    pub scheme: Scheme,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { n_paths: 100_000, n_steps: 400, seed: 0, v_mode: VMode::SampleFromPi, scheme: Scheme::EulerMaruyama }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 50 {
            return Err(Error::invalid(format!("n_steps must be at least 50, got {}", self.n_steps)));
        }
        if self.n_paths < 100 {
            return Err(Error::invalid(format!("n_paths must be at least 100, got {}", self.n_paths)));
        }
        if let VMode::FixedV(v) = self.v_mode {
            if !v.is_finite() {
                return Err(Error::invalid("fixed value must be finite"));
            }
        }
        Ok(())
    }
}

/// Terminal record of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathRecord {
    pub y1: f64,
    pub v: f64,
    /// `(c/2) Σ α² Δt`.
    pub penalty: f64,
    /// `Σ (v − H) α Δt`.
    pub gain: f64,
    /// Noise traders' trading profit `Σ (v − H(t_{i+1}, Y_{i+1})) σ ΔB_i`.
    pub noise_wealth: f64,
    /// `H(1, Y₁)`.
    pub terminal_price: f64,
}

/// Pooled moments of the standardised increments `ΔY/(σ√Δt)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct IncrementStats {
    pub count: f64,
    pub sum: f64,
    pub sum2: f64,
    pub sum3: f64,
    pub sum4: f64,
    pub lag_count: f64,
    pub lag_sum: f64,
}

impl IncrementStats {
    fn merge(&mut self, o: &Self) {
        self.count += o.count;
        self.sum += o.sum;
        self.sum2 += o.sum2;
        self.sum3 += o.sum3;
        self.sum4 += o.sum4;
        self.lag_count += o.lag_count;
        self.lag_sum += o.lag_sum;
    }
}

/// Sums for the no-intercept regression of `ΔY/(σΔt)` on
/// `z = (v − μ)/γ − ΛY/σ` over steps starting before `bucket_end`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BridgeSums {
    pub bucket_end: f64,
    pub n: f64,
    pub xz: f64,
    pub zz: f64,
    pub xx: f64,
    /// `Σ r(t) z²`, for the z²-weighted theoretical rate.
    pub rzz: f64,
}

impl BridgeSums {
    fn merge(&mut self, o: &Self) {
        self.n += o.n;
        self.xz += o.xz;
        self.zz += o.zz;
        self.xx += o.xx;
        self.rzz += o.rzz;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEnsemble {
    pub config: SimConfig,
    pub dt: f64,
    pub records: Vec<PathRecord>,
    pub flagged_paths: usize,
    /// Per time node `t_i = iΔt`, `i = 0..=n_steps`.
    pub mean_y: Vec<f64>,
    pub var_y: Vec<f64>,
    pub mean_h: Vec<f64>,
    pub var_h: Vec<f64>,
    pub increments: IncrementStats,
    pub bridge: Option<BridgeSums>,
}

/// Key for the stream family of one refinement level.
fn level_rng(seed: u64, level: u64, path: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed ^ level.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for chunk in key.chunks_mut(8) {
        // splitmix64
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        chunk.copy_from_slice(&(z ^ (z >> 31)).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(path);
    rng
}

/// Standard Brownian increments over `n_steps` equal steps of `[0, 1]`.
fn brownian_increments(seed: u64, path: u64, n_steps: usize) -> Vec<f64> {
    let levels = n_steps.trailing_zeros();
    let base = n_steps >> levels;
    let mut rng = level_rng(seed, 0, path);
    let dt0 = 1.0 / base as f64;
    let mut inc: Vec<f64> = (0..base).map(|_| dt0.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut dt = dt0;
    for level in 1..=levels {
        let mut rng = level_rng(seed, level as u64, path);
        let half = (dt / 4.0).sqrt();
        let mut fine = Vec::with_capacity(inc.len() * 2);
        for d in &inc {
            let w: f64 = rng.sample(StandardNormal);
            fine.push(0.5 * d + half * w);
            fine.push(0.5 * d - half * w);
        }
        inc = fine;
        dt *= 0.5;
    }
    inc
}

struct ChunkAcc {
    records: Vec<PathRecord>,
    flagged: usize,
    sum_y: Vec<f64>,
    sum_y2: Vec<f64>,
    sum_h: Vec<f64>,
    sum_h2: Vec<f64>,
    increments: IncrementStats,
    bridge: Option<BridgeSums>,
}

/// Gaussian structure needed for the bridge regression.
#[derive(Clone, Copy)]
struct BridgeSpec {
    mu: f64,
    gamma: f64,
    big_lambda: f64,
    kappa: f64,
    bucket_end: f64,
}

fn simulate_inner(em: &EquilibriumModel, cfg: &SimConfig, bridge: Option<BridgeSpec>) -> Result<PathEnsemble> {
    cfg.validate()?;
    let dist = em.distribution();
    if let VMode::FixedV(v) = cfg.v_mode {
        if let ValueDistribution::Discrete { atoms } = dist {
            if !atoms.iter().any(|a| (a.0 - v).abs() <= 1e-12 * v.abs().max(1.0)) {
                return Err(Error::invalid(format!("v = {v} is not in the support of the value distribution")));
            }
        }
    }
    let n = cfg.n_steps;
    let dt = 1.0 / n as f64;
    let sigma = em.params().sigma();
    let c = em.params().c();
    let n_chunks = cfg.n_paths.div_ceil(CHUNK);

    let chunks: Vec<ChunkAcc> = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let lo = k * CHUNK;
            let hi = ((k + 1) * CHUNK).min(cfg.n_paths);
            let mut acc = ChunkAcc {
                records: Vec::with_capacity(hi - lo),
                flagged: 0,
                sum_y: vec![0.0; n + 1],
                sum_y2: vec![0.0; n + 1],
                sum_h: vec![0.0; n + 1],
                sum_h2: vec![0.0; n + 1],
                increments: IncrementStats::default(),
                bridge: bridge.map(|b| BridgeSums { bucket_end: b.bucket_end, ..Default::default() }),
            };
            let mut ys = vec![0.0; n + 1];
            let mut hs = vec![0.0; n + 1];
            for path in lo..hi {
                let v = match cfg.v_mode {
                    VMode::FixedV(v) => v,
                    VMode::SampleFromPi => dist.sample(&mut level_rng(cfg.seed, VALUE_LEVEL, path as u64)),
                };
                let db = brownian_increments(cfg.seed, path as u64, n);
                match run_path(em, v, &db, dt, sigma, c, &mut ys, &mut hs) {
                    Some(rec) => {
                        for i in 0..=n {
                            acc.sum_y[i] += ys[i];
                            acc.sum_y2[i] += ys[i] * ys[i];
                            acc.sum_h[i] += hs[i];
                            acc.sum_h2[i] += hs[i] * hs[i];
                        }
                        let scale = 1.0 / (sigma * dt.sqrt());
                        let mut prev: Option<f64> = None;
                        let st = &mut acc.increments;
                        for i in 0..n {
                            let u = (ys[i + 1] - ys[i]) * scale;
                            st.count += 1.0;
                            st.sum += u;
                            st.sum2 += u * u;
                            st.sum3 += u * u * u;
                            st.sum4 += u * u * u * u;
                            if let Some(p) = prev {
                                st.lag_count += 1.0;
                                st.lag_sum += p * u;
                            }
                            prev = Some(u);
                        }
                        if let (Some(b), Some(sums)) = (bridge, acc.bridge.as_mut()) {
                            for i in 0..n {
                                let t = i as f64 * dt;
                                if t >= b.bucket_end {
                                    break;
                                }
                                let z = (v - b.mu) / b.gamma - b.big_lambda * ys[i] / sigma;
                                let x = (ys[i + 1] - ys[i]) / (sigma * dt);
                                let r = speed_of_mean_reversion(t, b.kappa).unwrap_or(f64::NAN);
                                sums.n += 1.0;
                                sums.xz += x * z;
                                sums.zz += z * z;
                                sums.xx += x * x;
                                sums.rzz += r * z * z;
                            }
                        }
                        acc.records.push(rec);
                    }
                    None => acc.flagged += 1,
                }
            }
            acc
        })
        .collect();

    // reduce in chunk order so the result does not depend on scheduling
    let mut records = Vec::with_capacity(cfg.n_paths);
    let mut flagged = 0;
    let mut sum_y = vec![0.0; n + 1];
    let mut sum_y2 = vec![0.0; n + 1];
    let mut sum_h = vec![0.0; n + 1];
    let mut sum_h2 = vec![0.0; n + 1];
    let mut increments = IncrementStats::default();
    let mut bridge_sums = bridge.map(|b| BridgeSums { bucket_end: b.bucket_end, ..Default::default() });
    for ch in chunks {
        records.extend(ch.records);
        flagged += ch.flagged;
        for i in 0..=n {
            sum_y[i] += ch.sum_y[i];
            sum_y2[i] += ch.sum_y2[i];
            sum_h[i] += ch.sum_h[i];
            sum_h2[i] += ch.sum_h2[i];
        }
        increments.merge(&ch.increments);
        if let (Some(total), Some(part)) = (bridge_sums.as_mut(), ch.bridge.as_ref()) {
            total.merge(part);
        }
    }
    if flagged as f64 > MAX_FLAGGED_FRACTION * cfg.n_paths as f64 {
        return Err(Error::Numerical(format!(
            "drift evaluation failed on {flagged} of {} paths",
            cfg.n_paths
        )));
    }
    let m = records.len() as f64;
    let mean = |s: &[f64]| s.iter().map(|x| x / m).collect::<Vec<_>>();
    let mean_y = mean(&sum_y);
    let mean_h = mean(&sum_h);
    let var = |s2: &[f64], mu: &[f64]| {
        s2.iter().zip(mu).map(|(s, mu)| ((s / m - mu * mu) * m / (m - 1.0)).max(0.0)).collect::<Vec<_>>()
    };
    Ok(PathEnsemble {
        config: cfg.clone(),
        dt,
        var_y: var(&sum_y2, &mean_y),
        var_h: var(&sum_h2, &mean_h),
        mean_y,
        mean_h,
        records,
        flagged_paths: flagged,
        increments,
        bridge: bridge_sums,
    })
}

/// Advances one path; `None` if the drift or price is not finite somewhere.
#[allow(clippy::too_many_arguments)]
fn run_path(
    em: &EquilibriumModel,
    v: f64,
    db: &[f64],
    dt: f64,
    sigma: f64,
    c: f64,
    ys: &mut [f64],
    hs: &mut [f64],
) -> Option<PathRecord> {
    let n = db.len();
    let mut y = 0.0;
    let (mut penalty, mut gain, mut noise) = (0.0, 0.0, 0.0);
    let mut h = em.pricing_rule_h(0.0, 0.0).ok()?;
    ys[0] = 0.0;
    hs[0] = h;
    for i in 0..n {
        let t = i as f64 * dt;
        let a = em.alpha_star(t, y, v).ok()?;
        if !(a.is_finite() && h.is_finite()) {
            return None;
        }
        penalty += 0.5 * c * a * a * dt;
        gain += (v - h) * a * dt;
        y += a * dt + sigma * db[i];
        let h_next = em.pricing_rule_h((i + 1) as f64 * dt, y).ok()?;
        noise += (v - h_next) * sigma * db[i];
        h = h_next;
        ys[i + 1] = y;
        hs[i + 1] = h;
    }
    if !(y.is_finite() && h.is_finite() && noise.is_finite()) {
        return None;
    }
    Some(PathRecord { y1: y, v, penalty, gain, noise_wealth: noise, terminal_price: h })
}

/// Simulates `cfg.n_paths` independent equilibrium paths.
pub fn simulate(em: &EquilibriumModel, cfg: &SimConfig) -> Result<PathEnsemble> {
    simulate_inner(em, cfg, None)
}

/// Point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub point: f64,
    pub se: f64,
}

impl Estimate {
    fn from_samples(xs: impl Iterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Self { point: mean, se: (var / n).sqrt() }
    }

    /// `|point − target| ≤ k·se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.point - target).abs() <= k * self.se
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JarqueBera {
    pub statistic: f64,
    /// Asymptotic χ²(2) p-value, `exp(−JB/2)`.
    pub p_value: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Checks that `Y/σ` behaves like a standard Brownian motion; only defined
/// when V is drawn from its prior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrownianDiagnostics {
    /// `max_t |mean(Y_t)|`; `se = σ/√n` at `t = 1`.
    pub max_abs_mean_y: Estimate,
    /// `max_{t ≥ 0.1} |var(Y_t)/(σ²t) − 1|`; `se = √(2/n)`.
    pub max_var_ratio_dev: Estimate,
    /// `max_t |mean(H_t) − H(0, 0)|` with the standard error at the maximiser.
    pub price_drift: Estimate,
    /// Lag-1 autocorrelation of standardised increments.
    pub lag1_autocorrelation: Estimate,
    pub jarque_bera: JarqueBera,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub insider_wealth: Estimate,
    pub expected_penalty: Estimate,
    pub noise_loss: Estimate,
    pub terminal_posterior_variance: Estimate,
    pub mean_y1: Estimate,
    pub var_y1: Estimate,
    pub brownian: Option<BrownianDiagnostics>,
    pub flagged_paths: usize,
    pub config: SimConfig,
}

pub fn mc_report(ens: &PathEnsemble, em: &EquilibriumModel) -> McReport {
    let recs = &ens.records;
    let n = recs.len() as f64;
    let sigma = em.params().sigma();
    let insider_wealth = Estimate::from_samples(recs.iter().map(|r| r.gain - r.penalty));
    let expected_penalty = Estimate::from_samples(recs.iter().map(|r| r.penalty));
    let noise_loss = Estimate::from_samples(recs.iter().map(|r| -r.noise_wealth));
    let terminal_posterior_variance = Estimate::from_samples(recs.iter().map(|r| (r.v - r.terminal_price).powi(2)));
    let mean_y1 = Estimate::from_samples(recs.iter().map(|r| r.y1));
    let var_y1 = {
        let m = mean_y1.point;
        let sq = Estimate::from_samples(recs.iter().map(|r| (r.y1 - m).powi(2)));
        Estimate { point: sq.point * n / (n - 1.0), se: sq.se }
    };

    let brownian = matches!(ens.config.v_mode, VMode::SampleFromPi).then(|| {
        let steps = ens.mean_y.len() - 1;
        let max_abs_mean_y = ens.mean_y.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut max_dev = 0.0f64;
        for i in 1..=steps {
            let t = i as f64 * ens.dt;
            if t >= 0.1 - 1e-12 {
                max_dev = max_dev.max((ens.var_y[i] / (sigma * sigma * t) - 1.0).abs());
            }
        }
        let h0 = ens.mean_h[0];
        let (mut drift, mut drift_se) = (0.0f64, f64::MIN_POSITIVE);
        for i in 0..=steps {
            let d = (ens.mean_h[i] - h0).abs();
            if d >= drift {
                drift = d;
                drift_se = (ens.var_h[i] / n).sqrt().max(f64::MIN_POSITIVE);
            }
        }
        let st = &ens.increments;
        let mean = st.sum / st.count;
        let m2 = st.sum2 / st.count - mean * mean;
        let m3 = st.sum3 / st.count - 3.0 * mean * st.sum2 / st.count + 2.0 * mean.powi(3);
        let m4 = st.sum4 / st.count - 4.0 * mean * st.sum3 / st.count + 6.0 * mean * mean * st.sum2 / st.count
            - 3.0 * mean.powi(4);
        let skewness = m3 / m2.powf(1.5);
        let excess_kurtosis = m4 / (m2 * m2) - 3.0;
        let statistic = st.count / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0);
        BrownianDiagnostics {
            max_abs_mean_y: Estimate { point: max_abs_mean_y, se: sigma / n.sqrt() },
            max_var_ratio_dev: Estimate { point: max_dev, se: (2.0 / n).sqrt() },
            price_drift: Estimate { point: drift, se: drift_se },
            lag1_autocorrelation: Estimate {
                point: (st.lag_sum / st.lag_count - mean * mean) / m2,
                se: 1.0 / st.lag_count.sqrt(),
            },
            jarque_bera: JarqueBera { statistic, p_value: (-statistic / 2.0).exp(), skewness, excess_kurtosis },
        }
    });

    McReport {
        insider_wealth,
        expected_penalty,
        noise_loss,
        terminal_posterior_variance,
        mean_y1,
        var_y1,
        brownian,
        flagged_paths: ens.flagged_paths,
        config: ens.config.clone(),
    }
}

impl McReport {
    pub fn estimates(&self) -> BTreeMap<&'static str, Estimate> {
        let mut m = BTreeMap::from([
            ("insider_wealth", self.insider_wealth),
            ("expected_penalty", self.expected_penalty),
            ("noise_loss", self.noise_loss),
            ("terminal_posterior_variance", self.terminal_posterior_variance),
            ("mean_y1", self.mean_y1),
            ("var_y1", self.var_y1),
        ]);
        if let Some(b) = &self.brownian {
            m.insert("max_abs_mean_y", b.max_abs_mean_y);
            m.insert("max_var_ratio_dev", b.max_var_ratio_dev);
            m.insert("price_drift", b.price_drift);
            m.insert("lag1_autocorrelation", b.lag1_autocorrelation);
        }
        m
    }

    /// `{estimates: {name: {point, se}}, config, flagged_paths}`.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "estimates": self.estimates(),
            "config": self.config,
            "flagged_paths": self.flagged_paths,
            "jarque_bera": self.brownian.as_ref().map(|b| b.jarque_bera),
        })
    }
}

/// Regression of the simulated drift on the state for one κ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BridgeRow {
    pub kappa: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub coefficient: f64,
    pub se: f64,
    /// `r(0) = Λ`.
    pub rate_at_zero: f64,
    /// `r(t)` averaged with weights `z²` over the regression bucket.
    pub rate_weighted: f64,
    pub observations: f64,
}

impl BridgeRow {
    pub fn matches_rate_at_zero(&self) -> bool {
        (self.coefficient - self.rate_at_zero).abs() <= 3.0 * self.se
    }

    pub fn matches_weighted_rate(&self) -> bool {
        (self.coefficient - self.rate_weighted).abs() <= 3.0 * self.se
    }

    /// Strictly slower than the no-penalty bridge, whose rate is at least 1.
    pub fn below_bridge_rate(&self) -> bool {
        self.coefficient < 1.0
    }
}

/// Default bucket `[0, 0.05)` for [`bridge_comparison`].
pub const BRIDGE_BUCKET: f64 = 0.05;

/// For each κ, simulates the Gaussian model with `μ = 0`, `γ = σ = 1` and
/// regresses `ΔY/(σΔt)` on `z = (v − μ)/γ − ΛY/σ` over the early bucket
/// `t < 0.05`, where the true coefficient is `r(t) ≈ Λ`. The same seed is used
/// for every κ, so the comparison runs on common random numbers.
pub fn bridge_comparison(kappas: &[f64], cfg: &SimConfig) -> Result<Vec<BridgeRow>> {
    let cfg = SimConfig { v_mode: VMode::SampleFromPi, ..cfg.clone() };
    kappas
        .iter()
        .map(|&kappa| {
            let model = GaussianModel::from_kappa(kappa, 0.0, 1.0, 1.0)?;
            let em = EquilibriumModel::gaussian(&model);
            debug_assert!(matches!(em.pair().phi, Phi::Quadratic { .. }));
            let spec = BridgeSpec {
                mu: model.mu,
                gamma: model.gamma,
                big_lambda: model.big_lambda(),
                kappa,
                bucket_end: BRIDGE_BUCKET,
            };
            let ens = simulate_inner(&em, &cfg, Some(spec))?;
            let b = ens.bridge.expect("bridge sums requested");
            let coefficient = b.xz / b.zz;
            let resid = (b.xx - coefficient * b.xz) / (b.n - 1.0);
            Ok(BridgeRow {
                kappa,
                big_lambda: spec.big_lambda,
                coefficient,
                se: (resid / b.zz).sqrt(),
                rate_at_zero: spec.big_lambda,
                rate_weighted: b.rzz / b.zz,
                observations: b.n,
            })
        })
        .collect()
}
