//! Metropolis-Hastings kernels on `theta`: the truncated Gaussian random walk,
//! plain ABC-MCMC and the pseudo-marginal move used to rejuvenate outer SMC
//! particles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoxPrior, SimulatorModel};
use crate::models::normal;
use crate::outer::{Payload, ThetaParticle};

pub const SCALE_FLOOR: f64 = 1e-8;

/// Random walk `theta* ~ N(theta, diag(scale^2))` truncated to a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaProposal {
    scale: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Set when some scale hit the floor because the particles had no spread.
    pub degenerate: bool,
}

impl ThetaProposal {
    pub fn new(scale: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if scale.len() != lower.len() || scale.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: scale.len(),
                actual: lower.len().min(upper.len()),
            });
        }
        if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig(format!("proposal scales must be positive, got {scale:?}")));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidConfig("proposal bounds need lower < upper".into()));
        }
        Ok(Self {
            scale,
            lower,
            upper,
            degenerate: false,
        })
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    /// `ln P(lower < X < upper)` for `X ~ N(mean, s^2)`, per component.
    fn log_mass(&self, i: usize, mean: f64) -> f64 {
        let s = self.scale[i];
        let a = (self.lower[i] - mean) / s;
        let b = (self.upper[i] - mean) / s;
        // Work in whichever tail keeps precision.
        let mass = if a > 0.0 {
            normal::sf(a) - normal::sf(b)
        } else {
            normal::cdf(b) - normal::cdf(a)
        };
        if mass > 0.0 {
            return mass.ln();
        }
        // Both ends far in one tail: Mills-ratio asymptote of the nearer end.
        let t = if a > 0.0 { a } else { -b };
        -0.5 * t * t - (t * (2.0 * std::f64::consts::PI).sqrt()).ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let s = self.scale[i];
                let a = (self.lower[i] - m) / s;
                let b = (self.upper[i] - m) / s;
                // Inverse-cdf draw restricted to [a, b], on the side of the
                // distribution where the cdf values are well resolved.
                let u: f64 = rng.sample(rand::distr::Open01);
                let z = if a > 0.0 {
                    let (ta, tb) = (normal::sf(a), normal::sf(b));
                    -normal::quantile(tb + u * (ta - tb))
                } else {
                    let (ca, cb) = (normal::cdf(a), normal::cdf(b));
                    normal::quantile(ca + u * (cb - ca))
                };
                let z = if z.is_finite() {
                    z
                } else if a > 0.0 {
                    // Deep upper tail: the excess over `a` is close to Exp(a).
                    a - u.ln() / a
                } else {
                    b + u.ln() / (-b).max(f64::MIN_POSITIVE)
                };
                m + s * z.clamp(a, b)
            })
            .collect()
    }

    /// `ln q(from | to) - ln q(to | from)`. The Gaussian kernels cancel and only
    /// the truncation masses remain.
    pub fn log_ratio(&self, from: &[f64], to: &[f64]) -> f64 {
        (0..from.len())
            .map(|i| self.log_mass(i, from[i]) - self.log_mass(i, to[i]))
            .sum()
    }
}

/// Proposal whose per-component scale is the weighted standard deviation of
/// the particles (weights normalized), floored at [`SCALE_FLOOR`].
pub fn fit_proposal(thetas: &[Vec<f64>], weights: &[f64], lower: Vec<f64>, upper: Vec<f64>) -> Result<ThetaProposal> {
    if thetas.is_empty() || thetas.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: thetas.len(),
            actual: weights.len(),
        });
    }
    let dim = lower.len();
    let mut degenerate = false;
    let scale = (0..dim)
        .map(|i| {
            let mean: f64 = thetas.iter().zip(weights).map(|(t, w)| w * t[i]).sum();
            let var: f64 = thetas
                .iter()
                .zip(weights)
                .map(|(t, w)| w * (t[i] - mean) * (t[i] - mean))
                .sum();
            let sd = var.max(0.0).sqrt();
            if !(sd >= SCALE_FLOOR) {
                degenerate = true;
                SCALE_FLOOR
            } else {
                sd
            }
        })
        .collect();
    let mut p = ThetaProposal::new(scale, lower, upper)?;
    p.degenerate = degenerate;
    if degenerate {
        log::warn!("proposal scale floored at {SCALE_FLOOR}: particles have no spread");
    }
    Ok(p)
}

/// State of a plain ABC-MCMC chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState<O> {
    pub theta: Vec<f64>,
    pub output: O,
    pub distance: f64,
}

/// One ABC-MCMC update at tolerance `epsilon` with the indicator kernel.
///
/// The prior and proposal part of the acceptance ratio is tested first, and
/// only a proposal that passes it is simulated; it is then accepted iff its
/// distance is within `epsilon`.
pub fn abc_mcmc_step<M, R>(
    model: &M,
    state: &mut ChainState<M::Output>,
    epsilon: f64,
    proposal: &ThetaProposal,
    rng: &mut R,
) -> Result<bool>
where
    M: SimulatorModel,
    R: Rng + ?Sized,
{
    let prior = model.prior();
    let current = prior.log_density(&state.theta);
    if current == f64::NEG_INFINITY {
        return Err(Error::Precondition(format!(
            "chain state {:?} has zero prior density",
            state.theta
        )));
    }
    if !(state.distance <= epsilon) {
        return Err(Error::Precondition(format!(
            "chain state at distance {} outside tolerance {epsilon}",
            state.distance
        )));
    }
    let theta = proposal.sample(&state.theta, rng);
    if !prior.contains(&theta) {
        return Ok(false);
    }
    let log_ratio = prior.log_density(&theta) - current + proposal.log_ratio(&state.theta, &theta);
    let log_u = rng.random::<f64>().ln();
    if !(log_u < log_ratio) {
        return Ok(false);
    }
    let u = model.sample_latent(&theta, rng);
    let output = model.transform(&u, &theta)?;
    let distance = model.distance(model.observed(), &output)?;
    if distance <= epsilon {
        *state = ChainState { theta, output, distance };
        Ok(true)
    } else {
        Ok(false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcRun {
    pub samples: Vec<Vec<f64>>,
    pub accepted: u64,
    pub iterations: u64,
    /// Prior draws spent finding a starting point within tolerance.
    pub init_attempts: u64,
}

impl McmcRun {
    pub fn acceptance(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.accepted as f64 / self.iterations as f64
        }
    }
}

/// Runs ABC-MCMC at a fixed tolerance. The chain starts from the first prior
/// draw whose simulation lands within `epsilon` (at most `max_init` tries) and
/// keeps every `thin`-th state after `burn_in` iterations.
#[allow(clippy::too_many_arguments)]
pub fn run_abc_mcmc<M, R>(
    model: &M,
    epsilon: f64,
    proposal: &ThetaProposal,
    iterations: u64,
    burn_in: u64,
    thin: u64,
    max_init: u64,
    rng: &mut R,
) -> Result<McmcRun>
where
    M: SimulatorModel,
    R: Rng + ?Sized,
{
    let prior: &BoxPrior = model.prior();
    let mut init_attempts = 0;
    let mut state = loop {
        if init_attempts >= max_init {
            return Err(Error::degenerate(format!(
                "no prior draw within tolerance {epsilon} after {max_init} tries"
            )));
        }
        init_attempts += 1;
        let theta = prior.sample(rng);
        let u = model.sample_latent(&theta, rng);
        let output = model.transform(&u, &theta)?;
        let distance = model.distance(model.observed(), &output)?;
        if distance <= epsilon {
            break ChainState { theta, output, distance };
        }
    };
    let thin = thin.max(1);
    let mut samples = Vec::new();
    let mut accepted = 0;
    for it in 0..iterations {
        accepted += abc_mcmc_step(model, &mut state, epsilon, proposal, rng)? as u64;
        if it >= burn_in && (it - burn_in) % thin == 0 {
            samples.push(state.theta.clone());
        }
    }
    Ok(McmcRun {
        samples,
        accepted,
        iterations,
        init_attempts,
    })
}

/// Pseudo-marginal Metropolis-Hastings update of one outer particle.
///
/// Proposes `theta*`, rebuilds a fresh payload at `theta*` along `schedule`
/// (the realized tolerances so far) and accepts with probability
/// `min(1, prior ratio * proposal ratio * l(theta*) / l(theta))`, where the `l`
/// are the payloads' likelihood estimates. A proposal outside the prior is
/// rejected before any simulation; a rejected particle is left untouched.
///
/// The uniform is drawn before the fresh payload, which turns the test into a
/// threshold on `l(theta*)`. Estimates only decrease along the schedule, so
/// the fresh run stops as soon as it falls to the threshold.
pub fn pseudo_marginal_move<M, P, R>(
    model: &M,
    particle: &mut ThetaParticle<P>,
    proposal: &ThetaProposal,
    schedule: &[f64],
    settings: &P::Settings,
    rng: &mut R,
) -> Result<bool>
where
    M: SimulatorModel,
    P: Payload<M>,
    R: Rng + ?Sized,
{
    let prior = model.prior();
    let current = prior.log_density(&particle.theta);
    if current == f64::NEG_INFINITY {
        return Err(Error::Precondition(format!(
            "particle {:?} has zero prior density",
            particle.theta
        )));
    }
    let l_current = particle.payload.log_likelihood();
    if l_current == f64::NEG_INFINITY {
        return Err(Error::Precondition("moving a particle with zero likelihood estimate".into()));
    }
    let theta = proposal.sample(&particle.theta, rng);
    if !prior.contains(&theta) {
        return Ok(false);
    }
    let log_u = rng.random::<f64>().ln();
    // Accept iff log_u < prior + proposal terms + l* - l, i.e. l* > threshold.
    let threshold =
        l_current + log_u - (prior.log_density(&theta) - current) - proposal.log_ratio(&particle.theta, &theta);
    match P::fresh_above(model, &theta, settings, schedule, threshold, rng)? {
        Some(fresh) => {
            *particle = ThetaParticle { theta, payload: fresh };
            Ok(true)
        }
        None => Ok(false),
    }
}

/// The rejuvenation kernel of rare-event ABC-SMC2: [`pseudo_marginal_move`]
/// with an inner rare-event SMC as the likelihood estimator.
pub fn re_abc_mcmc_move<M, R>(
    model: &M,
    particle: &mut ThetaParticle<crate::inner::UPopulation<M::Moved>>,
    proposal: &ThetaProposal,
    schedule: &[f64],
    settings: &crate::inner::InnerSettings,
    rng: &mut R,
) -> Result<bool>
where
    M: SimulatorModel,
    R: Rng + ?Sized,
{
    pseudo_marginal_move(model, particle, proposal, schedule, settings, rng)
}
