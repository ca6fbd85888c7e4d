use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use web_time::Instant;

use super::config::{Algorithm, ModelSpec, RunConfig};
use super::data::ObservedData;
use super::io::{atomic_write, file_digest, particles_csv, schedule_csv, write_csv};
use crate::error::{Error, Result};
use crate::inner::InnerSettings;
use crate::mcmc::{run_abc_mcmc, ThetaProposal};
use crate::model::SimulatorModel;
use crate::models::{GaussianModel, GraphModel};
use crate::outer::{run_abc_smc, run_re_abc_smc2, RunResult, SmcConfig, StopReason, StopRule};
use crate::rng::{Purpose, Streams};
use crate::serde_inf;

pub const REPLICATE_MANIFEST: &str = "manifest.json";
pub const EXPERIMENT_MANIFEST: &str = "experiment.json";
pub const PARTICLES_FILE: &str = "particles.csv";
pub const SCHEDULE_FILE: &str = "schedule.csv";

/// Everything needed to regenerate one replicate, plus its headline numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateManifest {
    /// Always `"replicate"`.
    pub kind: String,
    pub version: String,
    pub config: RunConfig,
    pub replicate: usize,
    /// Absolute path of the observed data.
    pub data_path: PathBuf,
    pub data_sha256: String,
    /// Wall-clock budget in force, after budget matching.
    pub budget_secs: Option<f64>,
    /// Stopping rule that reproduces this replicate without a clock.
    pub replay: StopRule,
    pub particles: String,
    pub schedule: String,
    pub stop_reason: StopReason,
    pub error: Option<String>,
    pub elapsed_secs: f64,
    #[serde(with = "serde_inf")]
    pub final_epsilon: f64,
    pub log_evidence: Option<f64>,
    pub steps: usize,
    pub posterior_mean: Vec<f64>,
    /// ABC-MCMC acceptance rate.
    pub acceptance: Option<f64>,
}

impl ReplicateManifest {
    pub fn succeeded(&self) -> bool {
        self.stop_reason != StopReason::Failed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEntry {
    pub replicate: usize,
    /// Directory of the replicate, relative to the experiment manifest.
    pub dir: String,
    pub succeeded: bool,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    /// Always `"experiment"`.
    pub kind: String,
    pub version: String,
    pub config: RunConfig,
    pub replicates: Vec<ReplicateEntry>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub manifest: ExperimentManifest,
    pub replicates: Vec<ReplicateManifest>,
}

impl ExperimentOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.replicates.iter().all(ReplicateManifest::succeeded)
    }
}

/// A run together with the ABC-MCMC acceptance rate when there is one.
struct Outcome {
    result: RunResult,
    acceptance: Option<f64>,
}

fn run_on<M: SimulatorModel>(model: &M, cfg: &RunConfig, replicate: usize, stop: StopRule) -> Result<Outcome> {
    let smc = SmcConfig {
        n_theta: cfg.n_theta,
        adapt: cfg.adapt.clone(),
        stop,
        seed: cfg.seed,
        replicate: replicate as u64,
    };
    match cfg.algorithm {
        Algorithm::AbcSmc => Ok(Outcome {
            result: run_abc_smc(model, &smc, cfg.n_x),
            acceptance: None,
        }),
        Algorithm::ReAbcSmc2 => {
            let inner = InnerSettings {
                n_u: cfg.inner.n_u,
                alpha: cfg.inner.alpha,
                moves: cfg.inner.move_config(&cfg.model)?,
            };
            Ok(Outcome {
                result: run_re_abc_smc2(model, &smc, inner),
                acceptance: None,
            })
        }
        Algorithm::AbcMcmc => {
            let start = Instant::now();
            let prior = model.prior();
            let m = &cfg.mcmc;
            let scale = if m.proposal_scale.is_empty() {
                prior.lower().iter().zip(prior.upper()).map(|(l, u)| 0.1 * (u - l)).collect()
            } else {
                m.proposal_scale.clone()
            };
            let (lower, upper) = model.proposal_support();
            let proposal = ThetaProposal::new(scale, lower, upper)?;
            let mut rng = Streams::new(cfg.seed, replicate as u64).rng(0, Purpose::Replicate, 0, 0);
            let run = run_abc_mcmc(model, m.epsilon, &proposal, m.iterations, m.burn_in, m.thin, m.max_init, &mut rng);
            let elapsed_secs = start.elapsed().as_secs_f64();
            let result = match run {
                Ok(run) => {
                    let n = run.samples.len();
                    let acceptance = run.acceptance();
                    return Ok(Outcome {
                        result: RunResult {
                            algorithm: cfg.algorithm.to_string(),
                            weights: vec![1.0 / n as f64; n],
                            thetas: run.samples,
                            steps: Vec::new(),
                            log_evidence: f64::NAN,
                            stop_reason: StopReason::MaxSteps,
                            elapsed_secs,
                            error: None,
                        },
                        acceptance: Some(acceptance),
                    });
                }
                Err(e) => RunResult {
                    algorithm: cfg.algorithm.to_string(),
                    thetas: Vec::new(),
                    weights: Vec::new(),
                    steps: Vec::new(),
                    log_evidence: f64::NAN,
                    stop_reason: StopReason::Failed,
                    elapsed_secs,
                    error: Some(e.to_string()),
                },
            };
            Ok(Outcome { result, acceptance: None })
        }
    }
}

fn run_replicate(
    cfg: &RunConfig,
    data: &ObservedData,
    replicate: usize,
    stop: StopRule,
) -> Result<Outcome> {
    match (&cfg.model, data) {
        (ModelSpec::Gaussian(c), ObservedData::Vector(y)) => {
            let model = GaussianModel::new(c.clone(), y.clone())?;
            run_on(&model, cfg, replicate, stop)
        }
        (ModelSpec::Graph(c), ObservedData::Graph(g)) => {
            let model = GraphModel::new(c.clone(), g.clone())?;
            run_on(&model, cfg, replicate, stop)
        }
        _ => Err(Error::InvalidConfig("data file does not match the model kind".into())),
    }
}

/// Stopping rule that replays `result` exactly: same step count, and the
/// same number of MCMC iterations in the last step.
fn replay_rule(stop: &StopRule, result: &RunResult) -> StopRule {
    let mut replay = stop.clone();
    replay.budget_secs = None;
    replay.max_steps = result.steps.len();
    replay.final_moves = result.steps.last().filter(|s| s.resampled).map(|s| s.moves);
    replay
}

/// Wall-clock budget of `replicate`: the matched run's elapsed time when a
/// reference manifest is given, else the configured budget.
pub fn budget_for(cfg: &RunConfig, replicate: usize) -> Result<Option<f64>> {
    let Some(path) = &cfg.budget_match else {
        return Ok(cfg.stop.budget_secs);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("kind").and_then(|k| k.as_str()) {
        Some("replicate") => {
            let m: ReplicateManifest = serde_json::from_value(value)?;
            Ok(Some(m.elapsed_secs))
        }
        Some("experiment") => {
            let m: ExperimentManifest = serde_json::from_value(value)?;
            if m.replicates.is_empty() {
                return Err(Error::InvalidConfig(format!("{} lists no replicates", path.display())));
            }
            let entry = m
                .replicates
                .iter()
                .find(|e| e.replicate == replicate)
                .unwrap_or(&m.replicates[replicate % m.replicates.len()]);
            Ok(Some(entry.elapsed_secs))
        }
        _ => Err(Error::Parse(format!("{} is not a run manifest", path.display()))),
    }
}

fn replicate_dir(replicate: usize) -> String {
    format!("rep-{replicate:03}")
}

/// Runs one replicate under `stop` and writes its files into `dir`.
fn execute(
    cfg: &RunConfig,
    data: &ObservedData,
    data_path: &Path,
    data_sha256: &str,
    replicate: usize,
    stop: StopRule,
    dir: &Path,
) -> Result<ReplicateManifest> {
    let budget_secs = stop.budget_secs;
    let outcome = run_replicate(cfg, data, replicate, stop.clone())?;
    let r = &outcome.result;
    let names = cfg.model.parameter_names();
    atomic_write(&dir.join(PARTICLES_FILE), &particles_csv(&names, &r.thetas, &r.weights)?)?;
    atomic_write(&dir.join(SCHEDULE_FILE), &schedule_csv(&r.steps)?)?;
    let manifest = ReplicateManifest {
        kind: "replicate".into(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        replicate,
        data_path: data_path.to_path_buf(),
        data_sha256: data_sha256.to_string(),
        budget_secs,
        replay: replay_rule(&stop, r),
        particles: PARTICLES_FILE.into(),
        schedule: SCHEDULE_FILE.into(),
        stop_reason: r.stop_reason,
        error: r.error.clone(),
        elapsed_secs: r.elapsed_secs,
        final_epsilon: if cfg.algorithm == Algorithm::AbcMcmc { cfg.mcmc.epsilon } else { r.final_epsilon() },
        log_evidence: r.log_evidence.is_finite().then_some(r.log_evidence),
        steps: r.steps.len(),
        posterior_mean: if r.thetas.is_empty() { Vec::new() } else { r.posterior_mean() },
        acceptance: outcome.acceptance,
    };
    atomic_write(&dir.join(REPLICATE_MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

fn load_data(cfg: &RunConfig) -> Result<(ObservedData, PathBuf, String)> {
    let path = std::fs::canonicalize(&cfg.data).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("data file {}: {e}", cfg.data.display())))
    })?;
    let data = ObservedData::read(&cfg.model, &path)?;
    let digest = file_digest(&path)?;
    Ok((data, path, digest))
}

#[cfg(feature = "parallel")]
fn for_replicates<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn for_replicates<T: Send>(n: usize, _workers: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    Ok((0..n).map(f).collect())
}

/// Runs every replicate and writes `out/rep-NNN/{particles.csv, schedule.csv,
/// manifest.json}`, `out/summary.csv` and `out/experiment.json`. A replicate
/// that fails is recorded as failed and the others carry on.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let (data, data_path, digest) = load_data(cfg)?;
    let budgets = (0..cfg.replicates)
        .map(|r| budget_for(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let out = cfg.out.clone();
    let results = for_replicates(cfg.replicates, cfg.workers, |r| {
        let stop = StopRule {
            budget_secs: budgets[r],
            ..cfg.stop.clone()
        };
        let dir = out.join(replicate_dir(r));
        execute(cfg, &data, &data_path, &digest, r, stop, &dir).inspect_err(|e| log::error!("replicate {r}: {e}"))
    })?;
    // Configuration or I/O errors are not replicate failures.
    let replicates = results.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = ExperimentManifest {
        kind: "experiment".into(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        replicates: replicates
            .iter()
            .map(|m| ReplicateEntry {
                replicate: m.replicate,
                dir: replicate_dir(m.replicate),
                succeeded: m.succeeded(),
                elapsed_secs: m.elapsed_secs,
            })
            .collect(),
    };
    write_summary(&out.join("summary.csv"), &cfg.model, &replicates)?;
    atomic_write(&out.join(EXPERIMENT_MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(ExperimentOutcome { manifest, replicates })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn write_summary(path: &Path, model: &ModelSpec, reps: &[ReplicateManifest]) -> Result<()> {
    let names = model.parameter_names();
    let mut header = vec!["replicate", "succeeded", "stop_reason", "steps", "final_epsilon", "log_evidence", "elapsed_secs"];
    let mean_cols: Vec<String> = names.iter().map(|n| format!("mean_{n}")).collect();
    header.extend(mean_cols.iter().map(String::as_str));
    header.push("error");
    let rows: Vec<Vec<String>> = reps
        .iter()
        .map(|m| {
            let mut row = vec![
                m.replicate.to_string(),
                m.succeeded().to_string(),
                m.stop_reason.to_string(),
                m.steps.to_string(),
                m.final_epsilon.to_string(),
                fmt_opt(m.log_evidence),
                m.elapsed_secs.to_string(),
            ];
            for i in 0..names.len() {
                row.push(if m.succeeded() { fmt_opt(m.posterior_mean.get(i).copied()) } else { String::new() });
            }
            row.push(m.error.clone().unwrap_or_default());
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Regenerates the replicate described by `manifest_path` into `out_dir`,
/// following its replay rule instead of the clock.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<ReplicateManifest> {
    let m: ReplicateManifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
    let digest = file_digest(&m.data_path)?;
    if digest != m.data_sha256 {
        return Err(Error::InvalidConfig(format!(
            "data file {} changed since the run (sha256 {digest}, recorded {})",
            m.data_path.display(),
            m.data_sha256
        )));
    }
    let data = ObservedData::read(&m.config.model, &m.data_path)?;
    let mut cfg = m.config.clone();
    cfg.budget_match = None;
    execute(&cfg, &data, &m.data_path, &digest, m.replicate, m.replay.clone(), out_dir)
}

