use serde::{Deserialize, Serialize};
use web_time::Instant;

use super::{Payload, RawSims, RunResult, StepDiagnostics, StopReason, ThetaParticle};
use crate::adapt::{adapt_num_moves, bisect_tolerance, cess, BisectOutcome};
use crate::error::{Error, Result};
use crate::inner::{InnerSettings, UPopulation};
use crate::mcmc::{fit_proposal, pseudo_marginal_move};
use crate::model::SimulatorModel;
use crate::par;
use crate::rng::{Purpose, Streams};
use crate::serde_inf;
use crate::weights::{self, WeightedIndexSet};

/// Tuning of the outer sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// Resample when `ess < alpha * N_theta`.
    pub alpha: f64,
    /// Each tolerance targets a CESS of `beta * N_theta`.
    pub beta: f64,
    /// Each particle should move at least once with probability `1 - c`.
    pub c: f64,
    /// Most MCMC iterations per resample-move.
    pub move_cap: usize,
    /// Smallest tolerance the bisection may return.
    pub eps_floor: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.9,
            c: 0.2,
            move_cap: 50,
            eps_floor: 0.0,
        }
    }
}

/// When to stop; whichever rule fires first wins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopRule {
    #[serde(with = "serde_inf")]
    pub eps_target: f64,
    pub max_steps: usize,
    /// Stop after a resample-move whose probe acceptance falls below this.
    pub min_acceptance: f64,
    /// Wall-clock budget, checked between steps and between MCMC rounds.
    pub budget_secs: Option<f64>,
    /// Caps the MCMC iterations of step `max_steps`. Replays a run that its
    /// budget cut short in the middle of a resample-move.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_moves: Option<usize>,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            eps_target: 0.0,
            max_steps: 1000,
            min_acceptance: 0.015,
            budget_secs: None,
            final_moves: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmcConfig {
    pub n_theta: usize,
    pub adapt: AdaptConfig,
    pub stop: StopRule,
    pub seed: u64,
    pub replicate: u64,
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adapt;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_theta == 0 {
            return bad("N_theta must be at least 1".into());
        }
        if !(a.alpha > 0.0 && a.alpha < 1.0) || !(a.beta > 0.0 && a.beta < 1.0) || !(a.c > 0.0 && a.c < 1.0) {
            return bad(format!("alpha, beta and c must lie in (0, 1): {a:?}"));
        }
        if a.move_cap == 0 {
            return bad("move cap must be at least 1".into());
        }
        if !(a.eps_floor >= 0.0) || !(self.stop.eps_target >= 0.0) {
            return bad("tolerance floor and target must be >= 0".into());
        }
        Ok(())
    }
}

/// Adaptive outer SMC on `theta` with payload `P`.
pub struct OuterSampler<'a, M: SimulatorModel, P: Payload<M>> {
    model: &'a M,
    cfg: SmcConfig,
    settings: P::Settings,
    streams: Streams,
    particles: Vec<ThetaParticle<P>>,
    weights: WeightedIndexSet,
    epsilon: f64,
    schedule: Vec<f64>,
    steps: Vec<StepDiagnostics>,
    log_evidence: f64,
    start: Instant,
    stopped: Option<StopReason>,
}

impl<'a, M: SimulatorModel, P: Payload<M>> OuterSampler<'a, M, P> {
    /// Draws `N_theta` particles from the prior, each with a fresh payload.
    pub fn new(model: &'a M, cfg: SmcConfig, settings: P::Settings) -> Result<Self> {
        cfg.validate()?;
        let start = Instant::now();
        let streams = Streams::new(cfg.seed, cfg.replicate);
        let mut slots: Vec<Option<ThetaParticle<P>>> = vec![None; cfg.n_theta];
        par::map_mut(&mut slots, |m, slot| {
            let mut rng = streams.rng(0, Purpose::Init, 0, m as u64);
            let theta = model.prior().sample(&mut rng);
            let payload = P::init(model, &theta, &settings, &mut rng).map_err(|e| e.at_particle(m))?;
            *slot = Some(ThetaParticle { theta, payload });
            Ok(())
        })?;
        let particles = slots.into_iter().map(|p| p.expect("initialized")).collect();
        Ok(Self {
            model,
            weights: WeightedIndexSet::uniform(cfg.n_theta),
            cfg,
            settings,
            streams,
            particles,
            epsilon: f64::INFINITY,
            schedule: Vec::new(),
            steps: Vec::new(),
            log_evidence: 0.0,
            start,
            stopped: None,
        })
    }

    pub fn particles(&self) -> &[ThetaParticle<P>] {
        &self.particles
    }

    pub fn weights(&self) -> &WeightedIndexSet {
        &self.weights
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Tolerances used so far, in order.
    pub fn schedule(&self) -> &[f64] {
        &self.schedule
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.steps
    }

    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn stopped(&self) -> Option<StopReason> {
        self.stopped
    }

    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn check_stop(&self) -> Option<StopReason> {
        let stop = &self.cfg.stop;
        if self.epsilon <= stop.eps_target {
            Some(StopReason::TargetReached)
        } else if self.steps.len() >= stop.max_steps {
            Some(StopReason::MaxSteps)
        } else if stop.budget_secs.is_some_and(|b| self.elapsed() >= b) {
            Some(StopReason::Budget)
        } else {
            None
        }
    }

    /// Runs one adapt / reweight / resample-move step. Returns the stop reason
    /// once a stopping rule has fired.
    pub fn step(&mut self) -> Result<Option<StopReason>> {
        if let Some(r) = self.stopped {
            return Ok(Some(r));
        }
        if let Some(r) = self.check_stop() {
            self.stopped = Some(r);
            return Ok(Some(r));
        }
        let t = self.steps.len() as u64 + 1;
        let n = self.particles.len();
        let model = self.model;
        let w = self.weights.weights();

        // Choose the tolerance from the current particles without simulating.
        let curves: Vec<Option<weights::SurvivalCurve>> = self
            .particles
            .iter()
            .zip(&w)
            .map(|(p, &wm)| (wm > 0.0).then(|| p.payload.survival_curve()))
            .collect();
        let floor = self.cfg.adapt.eps_floor.max(self.cfg.stop.eps_target);
        let upper = if self.epsilon.is_finite() {
            self.epsilon
        } else {
            curves
                .iter()
                .flatten()
                .map(|c| c.max_distance())
                .fold(f64::NEG_INFINITY, f64::max)
                .max(floor)
        };
        let cess_at = |eps: f64| {
            let ratios: Vec<f64> = curves.iter().map(|c| c.as_ref().map_or(0.0, |c| c.mass(eps))).collect();
            cess(&w, &ratios).unwrap_or(0.0)
        };
        let bisection = bisect_tolerance(cess_at, floor, upper, self.epsilon, self.cfg.adapt.beta * n as f64);
        if bisection.outcome == BisectOutcome::Stalled {
            self.stopped = Some(StopReason::Stalled);
            return Ok(self.stopped);
        }
        let eps = bisection.epsilon;

        // Reweight: every live payload advances one step.
        let streams = self.streams;
        let settings = &self.settings;
        let alive: Vec<bool> = w.iter().map(|&x| x > 0.0).collect();
        let advanced = par::map_mut(&mut self.particles, |m, p| {
            if !alive[m] {
                return Ok((f64::NEG_INFINITY, None));
            }
            let mut rng = streams.rng(t, Purpose::Reweight, 0, m as u64);
            p.payload.advance(model, eps, settings, &mut rng).map_err(|e| e.at_particle(m))
        })?;
        let log_weights: Vec<f64> = self
            .weights
            .log_weights
            .iter()
            .zip(&advanced)
            .map(|(&lw, &(inc, _))| lw + inc)
            .collect();
        let next = weights::normalize(WeightedIndexSet::from_log_weights(log_weights))
            .map_err(|_| Error::degenerate(format!("every particle died at step {t}, tolerance {eps}")))?;
        self.log_evidence += next.log_sum;
        self.weights = next;
        self.epsilon = eps;
        self.schedule.push(eps);
        let inner: Vec<f64> = advanced.iter().filter_map(|a| a.1).collect();
        let inner_acceptance = (!inner.is_empty()).then(|| inner.iter().sum::<f64>() / inner.len() as f64);

        let ess = self.weights.ess()?;
        let mut diag = StepDiagnostics {
            step: t as usize,
            epsilon: eps,
            ess,
            cess: bisection.cess,
            resampled: false,
            acceptance: None,
            moves: 0,
            inner_acceptance,
            log_evidence: self.log_evidence,
            elapsed_secs: 0.0,
        };
        if ess < self.cfg.adapt.alpha * n as f64 {
            let (probe, moves) = self.resample_move(t)?;
            diag.resampled = true;
            diag.acceptance = Some(probe);
            diag.moves = moves;
            if probe < self.cfg.stop.min_acceptance {
                self.stopped = Some(StopReason::AcceptanceFloor);
            } else if self.cfg.stop.budget_secs.is_some_and(|b| self.elapsed() >= b) {
                self.stopped = Some(StopReason::Budget);
            }
        }
        diag.elapsed_secs = self.elapsed();
        log::debug!(
            "step {t}: eps {eps:.6} ess {ess:.1} accept {:?} moves {}",
            diag.acceptance,
            diag.moves
        );
        self.steps.push(diag);
        Ok(self.stopped)
    }

    /// Resamples, runs one probe MCMC iteration, then enough further
    /// iterations for the observed acceptance. Returns the probe acceptance
    /// and the total iteration count.
    fn resample_move(&mut self, t: u64) -> Result<(f64, usize)> {
        let n = self.particles.len();
        let (lower, upper) = self.model.proposal_support();
        let thetas: Vec<Vec<f64>> = self.particles.iter().map(|p| p.theta.clone()).collect();
        let proposal = fit_proposal(&thetas, &self.weights.weights(), lower, upper)?;
        let mut rng = self.streams.rng(t, Purpose::Resample, 0, 0);
        let ancestors = weights::multinomial_resample(&self.weights, &mut rng)?;
        self.particles = ancestors.iter().map(|&a| self.particles[a].clone()).collect();
        self.weights = WeightedIndexSet::uniform(n);

        let model = self.model;
        let streams = self.streams;
        let settings = &self.settings;
        let schedule = &self.schedule;
        let proposal = &proposal;
        let round = |k: u64, particles: &mut Vec<ThetaParticle<P>>| -> Result<usize> {
            let accepted = par::map_mut(particles, |m, p| {
                let mut rng = streams.rng(t, Purpose::Move, k, m as u64);
                pseudo_marginal_move(model, p, proposal, schedule, settings, &mut rng).map_err(|e| e.at_particle(m))
            })?;
            Ok(accepted.iter().filter(|&&a| a).count())
        };
        let probe = round(0, &mut self.particles)? as f64 / n as f64;
        let mut total = adapt_num_moves(probe, self.cfg.adapt.c, self.cfg.adapt.move_cap);
        if t as usize == self.cfg.stop.max_steps {
            if let Some(cap) = self.cfg.stop.final_moves {
                total = total.min(cap.max(1));
            }
        }
        let budget = self.cfg.stop.budget_secs;
        let start = self.start;
        let mut done = 1;
        while done < total {
            // Every round leaves the target invariant, so stopping between
            // rounds only costs mixing.
            if budget.is_some_and(|b| start.elapsed().as_secs_f64() >= b) {
                break;
            }
            round(done as u64, &mut self.particles)?;
            done += 1;
        }
        Ok((probe, done))
    }

    /// Steps until a stopping rule fires.
    pub fn run(&mut self) -> Result<StopReason> {
        loop {
            if let Some(r) = self.step()? {
                return Ok(r);
            }
        }
    }

    pub fn result(&self, algorithm: &str, stop_reason: StopReason, error: Option<String>) -> RunResult {
        RunResult {
            algorithm: algorithm.to_string(),
            thetas: self.particles.iter().map(|p| p.theta.clone()).collect(),
            weights: self.weights.weights(),
            steps: self.steps.clone(),
            log_evidence: self.log_evidence,
            stop_reason,
            elapsed_secs: self.elapsed(),
            error,
        }
    }
}

/// Builds a sampler and runs it to completion. Errors after initialization
/// come back as a failed result carrying the diagnostics so far.
pub fn run_smc<M: SimulatorModel, P: Payload<M>>(
    algorithm: &str,
    model: &M,
    cfg: &SmcConfig,
    settings: P::Settings,
) -> RunResult {
    let start = Instant::now();
    let mut sampler = match OuterSampler::<M, P>::new(model, cfg.clone(), settings) {
        Ok(s) => s,
        Err(e) => {
            return RunResult {
                algorithm: algorithm.to_string(),
                thetas: Vec::new(),
                weights: Vec::new(),
                steps: Vec::new(),
                log_evidence: f64::NAN,
                stop_reason: StopReason::Failed,
                elapsed_secs: start.elapsed().as_secs_f64(),
                error: Some(e.to_string()),
            }
        }
    };
    match sampler.run() {
        Ok(reason) => sampler.result(algorithm, reason, None),
        Err(e) => sampler.result(algorithm, StopReason::Failed, Some(e.to_string())),
    }
}

/// ABC-SMC with `n_x` simulations per particle.
pub fn run_abc_smc<M: SimulatorModel>(model: &M, cfg: &SmcConfig, n_x: usize) -> RunResult {
    run_smc::<M, RawSims>("abc-smc", model, cfg, n_x)
}

/// Rare-event ABC-SMC2 with an inner rare-event SMC per particle.
pub fn run_re_abc_smc2<M: SimulatorModel>(model: &M, cfg: &SmcConfig, inner: InnerSettings) -> RunResult {
    run_smc::<M, UPopulation<M::Moved>>("re-abc-smc2", model, cfg, inner)
}
