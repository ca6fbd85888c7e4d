use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::model::{InnerMoveConfig, MoverKind};
use crate::models::{GaussianModelConfig, GraphModelConfig};
use crate::outer::{AdaptConfig, StopRule};
use crate::serde_inf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    AbcMcmc,
    AbcSmc,
    ReAbcSmc2,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AbcMcmc => "abc-mcmc",
            Self::AbcSmc => "abc-smc",
            Self::ReAbcSmc2 => "re-abc-smc2",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abc-mcmc" => Ok(Self::AbcMcmc),
            "abc-smc" => Ok(Self::AbcSmc),
            "re-abc-smc2" => Ok(Self::ReAbcSmc2),
            _ => Err(Error::InvalidConfig(format!(
                "unknown algorithm {s:?}; expected abc-mcmc, abc-smc or re-abc-smc2"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Gaussian(GaussianModelConfig),
    Graph(GraphModelConfig),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian(_) => "gaussian",
            Self::Graph(_) => "graph",
        }
    }

    /// Column names of `theta`.
    pub fn parameter_names(&self) -> Vec<&'static str> {
        match self {
            Self::Gaussian(_) => vec!["sigma"],
            Self::Graph(_) => vec!["p", "r"],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian(c) => c.validate(),
            Self::Graph(c) => c.validate(),
        }
    }
}

/// Inner rare-event SMC settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerConfig {
    pub n_u: usize,
    /// Inner resampling threshold, as a fraction of `n_u`.
    pub alpha: f64,
    /// Move sweeps per inner step; the model's default when absent.
    pub sweeps: Option<u32>,
    pub slice_width: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            n_u: 100,
            alpha: 0.5,
            sweeps: None,
            slice_width: 0.25,
        }
    }
}

impl InnerConfig {
    pub fn move_config(&self, model: &ModelSpec) -> Result<InnerMoveConfig> {
        match model {
            ModelSpec::Gaussian(_) => InnerMoveConfig::new(MoverKind::Slice, self.sweeps.unwrap_or(1), self.slice_width),
            ModelSpec::Graph(_) => InnerMoveConfig::new(MoverKind::EdgeFlip, self.sweeps.unwrap_or(2), self.slice_width),
        }
    }
}

/// Plain ABC-MCMC settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    #[serde(with = "serde_inf")]
    pub epsilon: f64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    /// Random-walk scale per parameter; a tenth of the prior width when empty.
    pub proposal_scale: Vec<f64>,
    pub max_init: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            iterations: 10_000,
            burn_in: 1_000,
            thin: 1,
            proposal_scale: Vec::new(),
            max_init: 1_000_000,
        }
    }
}

/// One experiment: an algorithm, a model, its observed data and the sampler
/// settings, run for `replicates` independent replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub model: ModelSpec,
    /// Observed data file written by `synthesize`.
    pub data: PathBuf,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    #[serde(default = "one")]
    pub n_x: usize,
    #[serde(default)]
    pub inner: InnerConfig,
    #[serde(default)]
    pub adapt: AdaptConfig,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Manifest of an earlier run whose wall-clock time becomes this run's budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_match: Option<PathBuf>,
    #[serde(default = "one")]
    pub workers: usize,
}

fn default_n_theta() -> usize {
    250
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, model: ModelSpec, data: impl Into<PathBuf>) -> Self {
        Self {
            algorithm,
            model,
            data: data.into(),
            n_theta: default_n_theta(),
            n_x: 1,
            inner: InnerConfig::default(),
            adapt: AdaptConfig::default(),
            stop: StopRule::default(),
            mcmc: McmcConfig::default(),
            replicates: 1,
            seed: 0,
            out: default_out(),
            budget_match: None,
            workers: 1,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        self.model.validate()?;
        if self.n_theta == 0 || self.n_x == 0 || self.inner.n_u == 0 {
            return bad("N_theta, N_x and N_u must be at least 1");
        }
        if self.replicates == 0 {
            return bad("replicate count must be at least 1");
        }
        if self.workers == 0 {
            return bad("worker count must be at least 1");
        }
        if !(self.inner.alpha > 0.0 && self.inner.alpha <= 1.0) {
            return bad("inner alpha must lie in (0, 1]");
        }
        self.inner.move_config(&self.model)?;
        if self.algorithm == Algorithm::AbcMcmc {
            let m = &self.mcmc;
            if !(m.epsilon >= 0.0) || m.iterations == 0 || m.max_init == 0 {
                return bad("ABC-MCMC needs epsilon >= 0 and positive iteration counts");
            }
            let dim = self.model.parameter_names().len();
            if !m.proposal_scale.is_empty() && (m.proposal_scale.len() != dim || m.proposal_scale.iter().any(|s| !(*s > 0.0))) {
                return bad("ABC-MCMC proposal scale needs one positive entry per parameter");
            }
            if self.budget_match.is_some() || self.stop.budget_secs.is_some() {
                return bad("ABC-MCMC runs a fixed number of iterations and takes no budget");
            }
        }
        Ok(())
    }
}

pub const PRESETS: [&str; 4] = ["gaussian-d25-small", "gaussian-d25-paper", "graph-small", "graph-paper"];

/// Shipped scenarios. The observed data path defaults to `data/<name>.<ext>`.
///
/// ABC-SMC and ABC-MCMC get the same model and stopping rule. For the two
/// full-size presets ABC-SMC gets enough particles to match the RE-ABC-SMC2 cost per step.
pub fn preset(name: &str, algorithm: Algorithm) -> Result<RunConfig> {
    let gaussian = |n_theta, n_u, abc_n_theta| {
        let model = ModelSpec::Gaussian(GaussianModelConfig::with_dim(25));
        let mut cfg = RunConfig::new(algorithm, model, format!("data/{name}.csv"));
        cfg.n_theta = if algorithm == Algorithm::AbcSmc { abc_n_theta } else { n_theta };
        cfg.inner.n_u = n_u;
        cfg.stop.eps_target = 3.0;
        cfg.mcmc.epsilon = 3.0;
        cfg
    };
    let graph = |d, seed_nodes, n_theta, n_u, abc_n_theta, budget| {
        let model = ModelSpec::Graph(GraphModelConfig {
            d,
            seed_nodes,
            ..GraphModelConfig::default()
        });
        let mut cfg = RunConfig::new(algorithm, model, format!("data/{name}.txt"));
        cfg.n_theta = if algorithm == Algorithm::AbcSmc { abc_n_theta } else { n_theta };
        cfg.inner.n_u = n_u;
        cfg.stop.eps_target = 0.0;
        cfg.stop.budget_secs = budget;
        cfg.mcmc.epsilon = 1.0;
        cfg
    };
    let cfg = match name {
        "gaussian-d25-small" => gaussian(100, 50, 20_000),
        "gaussian-d25-paper" => gaussian(250, 100, 300_000),
        "graph-small" => graph(40, 10, 200, 100, 20_000, Some(240.0)),
        "graph-paper" => graph(100, 20, 500, 200, 1_500_000, None),
        _ => {
            return Err(Error::InvalidConfig(format!(
                "unknown preset {name:?}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    if algorithm == Algorithm::AbcMcmc {
        let mut cfg = cfg;
        cfg.stop.budget_secs = None;
        return Ok(cfg);
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            for alg in [Algorithm::AbcMcmc, Algorithm::AbcSmc, Algorithm::ReAbcSmc2] {
                let cfg = preset(name, alg).unwrap();
                cfg.validate().unwrap();
                let text = serde_json::to_string_pretty(&cfg).unwrap();
                assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
            }
        }
        let paper = preset("gaussian-d25-paper", Algorithm::ReAbcSmc2).unwrap();
        assert_eq!((paper.n_theta, paper.inner.n_u), (250, 100));
        assert_eq!(paper.stop.eps_target, 3.0);
        assert_eq!(preset("graph-paper", Algorithm::AbcSmc).unwrap().n_theta, 1_500_000);
        assert!(preset("nope", Algorithm::AbcSmc).is_err());
    }

    #[test]
    fn minimal_json_gets_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"algorithm": "abc-smc", "model": {"kind": "gaussian", "d": 1}, "data": "y.csv"}"#,
        )
        .unwrap();
        assert_eq!(cfg.adapt, AdaptConfig::default());
        assert_eq!(cfg.replicates, 1);
        assert_eq!(cfg.model, ModelSpec::Gaussian(GaussianModelConfig::with_dim(1)));
        let err = RunConfig::from_json(r#"{"algorithm": "abc-smc", "model": {"kind": "gaussian"}, "data": "y", "n_theta": 0}"#);
        assert!(err.is_err());
        let typo = RunConfig::from_json(r#"{"algorithm": "abc-smc", "model": {"kind": "gaussian"}, "data": "y", "ntheta": 5}"#);
        assert!(typo.is_err());
    }
}
