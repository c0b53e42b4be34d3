//! Run configuration: the JSON file format and its merge with command-line
//! flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use kyle_core::distribution::DistributionSpec;
use kyle_core::{FixedPointOptions, ModelParams, SimConfig, VMode, ValueDistribution};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub distribution: DistributionSpec,
    #[serde(default = "one")]
    pub sigma: f64,
    /// Penalty rate. Exactly one of `c` and `kappa` must be set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Scale-free rate `κ = cσ/γ`; Gaussian fundamentals only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), formats: all_formats() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub solver: FixedPointOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub outputs: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                distribution: DistributionSpec::Gaussian { mu: 0.0, gamma: 1.0 },
                sigma: 1.0,
                c: Some(1.0),
                kappa: None,
            },
            solver: FixedPointOptions::default(),
            sim: None,
            outputs: OutputConfig::default(),
        }
    }
}

/// Flags shared by every subcommand. Anything given here overrides the
/// corresponding field of `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration to start from.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the resolved configuration to this path.
    #[arg(long)]
    pub write_config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Mean of a Gaussian fundamental.
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Standard deviation of a Gaussian fundamental.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    /// Discrete fundamental as `v:p,v:p,...`.
    #[arg(long, allow_hyphen_values = true)]
    pub atoms: Option<String>,
    /// Bernoulli fundamental on {0, 1} with `P(V = 1) = p`.
    #[arg(long)]
    pub p: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    #[arg(long, conflicts_with = "kappa", allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub damping: Option<f64>,

    /// Monte Carlo paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Time steps per path.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulate conditionally on `V = v` instead of sampling V.
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<f64>,
}

fn parse_atoms(s: &str) -> Result<Vec<[f64; 2]>, CliError> {
    s.split(',')
        .map(|pair| {
            let (v, p) = pair
                .split_once(':')
                .ok_or_else(|| CliError::config(format!("atom `{pair}` is not of the form v:p")))?;
            let num = |x: &str| x.trim().parse::<f64>().map_err(|e| CliError::config(format!("atom `{pair}`: {e}")));
            Ok([num(v)?, num(p)?])
        })
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// Start from `--config` (or the defaults) and apply every flag.
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let mut cfg = match &args.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        let m = &mut cfg.model;
        if let Some(a) = &args.atoms {
            m.distribution = DistributionSpec::Discrete { atoms: parse_atoms(a)? };
        } else if let Some(p) = args.p {
            m.distribution = DistributionSpec::Discrete { atoms: vec![[0.0, 1.0 - p], [1.0, p]] };
        } else if args.mu.is_some() || args.gamma.is_some() {
            let (mu0, gamma0) = match m.distribution {
                DistributionSpec::Gaussian { mu, gamma } => (mu, gamma),
                DistributionSpec::Discrete { .. } => (0.0, 1.0),
            };
            m.distribution = DistributionSpec::Gaussian { mu: args.mu.unwrap_or(mu0), gamma: args.gamma.unwrap_or(gamma0) };
        }
        if let Some(s) = args.sigma {
            m.sigma = s;
        }
        if let Some(c) = args.c {
            m.c = Some(c);
            m.kappa = None;
        }
        if let Some(k) = args.kappa {
            m.kappa = Some(k);
            m.c = None;
        }
        if let Some(t) = args.tol {
            cfg.solver.tol = t;
        }
        if let Some(n) = args.max_iter {
            cfg.solver.max_iter = n;
        }
        if let Some(d) = args.damping {
            cfg.solver.damping = d;
        }
        if args.paths.is_some() || args.steps.is_some() || args.seed.is_some() || args.v.is_some() {
            let sim = cfg.sim.get_or_insert_with(SimConfig::default);
            if let Some(n) = args.paths {
                sim.n_paths = n;
            }
            if let Some(n) = args.steps {
                sim.n_steps = n;
            }
            if let Some(s) = args.seed {
                sim.seed = s;
            }
            if let Some(v) = args.v {
                sim.v_mode = VMode::FixedV(v);
            }
        }
        if let Some(o) = &args.out {
            cfg.outputs.dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (self.model.c, self.model.kappa) {
            (Some(_), None) => {}
            (None, Some(_)) => {
                if !matches!(self.model.distribution, DistributionSpec::Gaussian { .. }) {
                    return Err(CliError::config("kappa requires a Gaussian distribution"));
                }
            }
            _ => return Err(CliError::config("exactly one of c and kappa must be given")),
        }
        self.distribution()?;
        self.params()?;
        self.solver.validate()?;
        if let Some(s) = &self.sim {
            s.validate()?;
        }
        if self.outputs.formats.is_empty() {
            return Err(CliError::config("outputs.formats must not be empty"));
        }
        Ok(())
    }

    pub fn distribution(&self) -> Result<ValueDistribution, CliError> {
        Ok(ValueDistribution::try_from(self.model.distribution.clone())?)
    }

    /// `(μ, γ)` of a Gaussian fundamental, or `None`.
    pub fn gaussian(&self) -> Option<(f64, f64)> {
        match self.model.distribution {
            DistributionSpec::Gaussian { mu, gamma } => Some((mu, gamma)),
            DistributionSpec::Discrete { .. } => None,
        }
    }

    /// The penalty rate `c`, converting from κ when needed.
    pub fn c(&self) -> f64 {
        match (self.model.c, self.model.kappa, self.gaussian()) {
            (Some(c), _, _) => c,
            (None, Some(k), Some((_, gamma))) => k * gamma / self.model.sigma,
            _ => f64::NAN,
        }
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let mean = self.distribution()?.mean();
        Ok(ModelParams::with_mean(self.model.sigma, self.c(), mean)?)
    }

    pub fn sim_or_default(&self) -> SimConfig {
        self.sim.clone().unwrap_or_default()
    }

    pub fn wants(&self, f: Format) -> bool {
        self.outputs.formats.contains(&f)
    }

    /// SHA-256 of everything that influences results. The output location is
    /// left out so that relocating a run does not change its fingerprint.
    pub fn fingerprint(&self) -> String {
        let body = serde_json::json!({
            "model": self.model,
            "solver": self.solver,
            "sim": self.sim,
        });
        hex::encode(Sha256::digest(body.to_string().as_bytes()))
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration is serialisable") + "\n"
    }
}
