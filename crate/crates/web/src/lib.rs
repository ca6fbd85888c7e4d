//! WebAssembly bindings for the demo page in `www/`.
//!
//! Each export takes plain numbers and returns a JSON string, so the page needs
//! no bundler. Errors come back as `{"error": "..."}`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use rare_abc::inner::{run_inner_to, InnerSchedule, InnerSettings};
use rare_abc::model::{InnerMoveConfig, SimulatorModel};
use rare_abc::models::graph::{dd_grow, spectrum, two_clique_seed};
use rare_abc::models::{GaussianModel, GaussianModelConfig};
use rare_abc::outer::{run_abc_smc, run_re_abc_smc2, AdaptConfig, SmcConfig, StopRule};
use rare_abc::rng::{Purpose, Streams, UnitStream};
use rare_abc::Result;

fn to_json<T: Serialize>(r: Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}")),
        Err(e) => serde_json::json!({ "error": e.to_string() }).to_string(),
    }
}

fn gaussian(d: usize, data_seed: u64) -> Result<GaussianModel> {
    let config = GaussianModelConfig::with_dim(d);
    config.validate()?;
    let mut rng = Streams::new(data_seed, 0).rng(0, Purpose::Data, 0, 0);
    let y = GaussianModel::synthesize(&config, &mut rng);
    GaussianModel::new(config, y)
}

fn inner_settings(n_u: usize) -> Result<InnerSettings> {
    let s = InnerSettings {
        n_u,
        alpha: 0.5,
        moves: InnerMoveConfig::slice(1)?,
    };
    s.validate()?;
    Ok(s)
}

#[derive(Serialize)]
pub struct InnerReport {
    pub y: Vec<f64>,
    pub log_estimate: f64,
    pub epsilon: Vec<f64>,
    pub ess: Vec<f64>,
    pub acceptance: Vec<Option<f64>>,
    /// Fraction of `n_u` direct simulations within the target tolerance.
    pub direct_estimate: f64,
}

/// Inner rare-event SMC on the latent randomness at a fixed `sigma`.
pub fn inner_report(d: usize, sigma: f64, epsilon: f64, n_u: usize, seed: u64) -> Result<InnerReport> {
    let model = gaussian(d, seed)?;
    let settings = inner_settings(n_u)?;
    let streams = Streams::new(seed, 1);
    let schedule = InnerSchedule::Adaptive {
        beta: 0.5,
        floor: epsilon,
        max_steps: 500,
    };
    let run = run_inner_to(&model, &[sigma], epsilon, &schedule, &settings, &mut streams.rng(0, Purpose::Move, 0, 0))?;
    let mut rng = streams.rng(0, Purpose::Init, 0, 0);
    let mut hits = 0;
    for _ in 0..n_u {
        let u = model.sample_latent(&[sigma], &mut rng);
        hits += (model.observed_distance(&u, &[sigma])? <= epsilon) as usize;
    }
    Ok(InnerReport {
        y: model.observed().clone(),
        log_estimate: run.log_estimate,
        epsilon: run.records.iter().map(|r| r.epsilon).collect(),
        ess: run.records.iter().map(|r| r.ess).collect(),
        acceptance: run.records.iter().map(|r| r.acceptance).collect(),
        direct_estimate: hits as f64 / n_u as f64,
    })
}

#[derive(Serialize)]
pub struct SmcReport {
    pub algorithm: String,
    pub stop_reason: String,
    pub error: Option<String>,
    pub epsilon: Vec<f64>,
    pub ess: Vec<f64>,
    pub sigma: Vec<f64>,
    pub weights: Vec<f64>,
    pub posterior_mean: f64,
    pub log_evidence: f64,
    pub elapsed_secs: f64,
}

/// ABC-SMC (`n_u` simulations per particle) or RE-ABC-SMC2 (`n_u` inner
/// particles) on synthetic Gaussian data.
pub fn smc_report(rare_event: bool, d: usize, n_theta: usize, n_u: usize, eps_target: f64, budget_secs: f64, seed: u64) -> Result<SmcReport> {
    let model = gaussian(d, seed)?;
    let cfg = SmcConfig {
        n_theta,
        adapt: AdaptConfig::default(),
        stop: StopRule {
            eps_target,
            budget_secs: (budget_secs > 0.0).then_some(budget_secs),
            ..StopRule::default()
        },
        seed,
        replicate: 0,
    };
    let r = if rare_event {
        run_re_abc_smc2(&model, &cfg, inner_settings(n_u)?)
    } else {
        if n_u == 0 {
            return Err(rare_abc::Error::InvalidConfig("N_x must be at least 1".into()));
        }
        run_abc_smc(&model, &cfg, n_u)
    };
    Ok(SmcReport {
        algorithm: r.algorithm.clone(),
        stop_reason: r.stop_reason.to_string(),
        error: r.error.clone(),
        epsilon: r.steps.iter().map(|s| s.epsilon).collect(),
        ess: r.steps.iter().map(|s| s.ess).collect(),
        sigma: r.thetas.iter().map(|t| t[0]).collect(),
        weights: r.weights.clone(),
        posterior_mean: r.posterior_mean().first().copied().unwrap_or(f64::NAN),
        log_evidence: r.log_evidence,
        elapsed_secs: r.elapsed_secs,
    })
}

#[derive(Serialize)]
pub struct GraphReport {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub spectrum: Vec<f64>,
}

/// A two-clique seed grown by duplication-divergence to `d` nodes.
pub fn graph_report(d: usize, seed_nodes: usize, p: f64, r: f64, seed: u64) -> Result<GraphReport> {
    if seed_nodes < 2 || seed_nodes > d || !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&r) {
        return Err(rare_abc::Error::InvalidConfig(
            "need 2 <= seed nodes <= d and p, r in [0, 1]".into(),
        ));
    }
    let mut rng = Streams::new(seed, 0).rng(0, Purpose::Data, 0, 0);
    let s = two_clique_seed(seed_nodes, 0.3, &mut rng);
    let g = dd_grow(&s, p, r, d, &UnitStream::Keyed(seed))?;
    Ok(GraphReport {
        nodes: g.nodes(),
        edges: g.edges().collect(),
        spectrum: spectrum(&g)?,
    })
}

#[wasm_bindgen]
pub fn inner_estimate(d: usize, sigma: f64, epsilon: f64, n_u: usize, seed: u64) -> String {
    to_json(inner_report(d, sigma, epsilon, n_u, seed))
}

#[wasm_bindgen]
pub fn gaussian_smc(rare_event: bool, d: usize, n_theta: usize, n_u: usize, eps_target: f64, budget_secs: f64, seed: u64) -> String {
    to_json(smc_report(rare_event, d, n_theta, n_u, eps_target, budget_secs, seed))
}

#[wasm_bindgen]
pub fn grow_graph(d: usize, seed_nodes: usize, p: f64, r: f64, seed: u64) -> String {
    to_json(graph_report(d, seed_nodes, p, r, seed))
}
