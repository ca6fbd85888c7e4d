//! Rare-event SMC on the latent randomness `u` for one fixed `theta`.
//!
//! Starting from `u ~ phi(. | theta)` at `eps = inf`, each step shrinks the
//! tolerance, reweights by the indicator of the new constraint, resamples when
//! the ESS is low and moves `u_s` with a kernel that leaves the constrained
//! distribution invariant. The product of the per-step weight sums is an
//! unbiased estimate of `P(distance(y, H(u, theta)) <= eps)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::{bisect_tolerance, cess, BisectOutcome, Bisection};
use crate::error::{Error, Result};
use crate::model::{InnerMoveConfig, Latent, MoveStats, SimulatorModel};
use crate::weights::{self, WeightedIndexSet};

/// Reweights a normalized set by `1{d <= eps}` and renormalizes.
///
/// Returns the new set and `log sum_n w_n 1{d_n <= eps}`, or `None` when no
/// particle survives.
pub fn reweight_indicator(
    w: &WeightedIndexSet,
    distances: &[f64],
    epsilon: f64,
) -> Result<Option<(WeightedIndexSet, f64)>> {
    if !w.normalized {
        return Err(Error::NotNormalized("indicator reweighting"));
    }
    if w.len() != distances.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            actual: distances.len(),
        });
    }
    let mut log_weights = Vec::with_capacity(w.len());
    let mut alive = false;
    for (&lw, &d) in w.log_weights.iter().zip(distances) {
        let k = weights::kernel_log_weight(d, epsilon)?;
        let v = lw + k;
        alive |= v > f64::NEG_INFINITY;
        log_weights.push(v);
    }
    if !alive {
        return Ok(None);
    }
    let next = weights::normalize(WeightedIndexSet::from_log_weights(log_weights))?;
    let increment = next.log_sum;
    Ok(Some((next, increment)))
}

/// Population size, resampling threshold and mover of an inner sampler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerSettings {
    pub n_u: usize,
    /// Resample when `ess < alpha * n_u`.
    pub alpha: f64,
    pub moves: InnerMoveConfig,
}

impl InnerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_u == 0 {
            return Err(Error::InvalidConfig("N_u must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("inner alpha = {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }
}

/// Diagnostics of one inner step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerStepRecord {
    pub step: usize,
    pub epsilon: f64,
    /// ESS after reweighting, before any resampling.
    pub ess: f64,
    pub increment: f64,
    pub resampled: bool,
    pub acceptance: Option<f64>,
}

/// The inner particle system on `u` for one `theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct UPopulation<S> {
    theta: Vec<f64>,
    particles: Vec<Latent<S>>,
    weights: WeightedIndexSet,
    distances: Vec<f64>,
    ancestors: Option<Vec<usize>>,
    epsilon: f64,
    log_estimate: f64,
    steps: usize,
    dead_at: Option<usize>,
    last_moves: MoveStats,
}

impl<S: Clone> UPopulation<S> {
    /// `n_u` i.i.d. draws from `phi(. | theta)` with uniform weights at `eps = inf`.
    pub fn init<M, R>(model: &M, theta: &[f64], n_u: usize, rng: &mut R) -> Result<Self>
    where
        M: SimulatorModel<Moved = S>,
        R: Rng + ?Sized,
    {
        if n_u == 0 {
            return Err(Error::InvalidConfig("N_u must be at least 1".into()));
        }
        let mut particles = Vec::with_capacity(n_u);
        let mut distances = Vec::with_capacity(n_u);
        for n in 0..n_u {
            let u = model.sample_latent(theta, rng);
            let d = model.observed_distance(&u, theta).map_err(|e| e.at_particle(n))?;
            particles.push(u);
            distances.push(d);
        }
        Ok(Self {
            theta: theta.to_vec(),
            particles,
            weights: WeightedIndexSet::uniform(n_u),
            distances,
            ancestors: None,
            epsilon: f64::INFINITY,
            log_estimate: 0.0,
            steps: 0,
            dead_at: None,
            last_moves: MoveStats::default(),
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Latent<S>] {
        &self.particles
    }

    pub fn weights(&self) -> &WeightedIndexSet {
        &self.weights
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// Ancestors drawn at the latest resampling, if the latest step resampled.
    pub fn ancestors(&self) -> Option<&[usize]> {
        self.ancestors.as_deref()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Running `sum_t log sum_n w~_t^n`; `-inf` once the population has died.
    pub fn log_estimate(&self) -> f64 {
        self.log_estimate
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Step at which every particle fell outside the tolerance.
    pub fn dead_at(&self) -> Option<usize> {
        self.dead_at
    }

    pub fn is_dead(&self) -> bool {
        self.dead_at.is_some()
    }

    pub fn last_moves(&self) -> MoveStats {
        self.last_moves
    }

    /// Largest cached distance among particles with positive weight.
    pub fn max_live_distance(&self) -> f64 {
        self.weights
            .log_weights
            .iter()
            .zip(&self.distances)
            .filter(|(&lw, _)| lw > f64::NEG_INFINITY)
            .map(|(_, &d)| d)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Surviving mass `sum_n w_n 1{d_n <= eps}` as a function of `eps`.
    pub fn survival_curve(&self) -> weights::SurvivalCurve {
        weights::SurvivalCurve::new(&self.weights.log_weights, &self.distances)
    }

    /// Moves the constraint to `eps_new` without simulating. Returns the log
    /// increment `log sum_n w_n 1{d_n <= eps_new}`, `-inf` if the population dies.
    pub fn reweight(&mut self, eps_new: f64) -> Result<f64> {
        if self.is_dead() {
            return Err(Error::Precondition("reweighting a dead population".into()));
        }
        if !(eps_new <= self.epsilon) || eps_new < 0.0 {
            return Err(Error::Precondition(format!(
                "new tolerance {eps_new} must lie in [0, {}]",
                self.epsilon
            )));
        }
        self.steps += 1;
        self.epsilon = eps_new;
        self.ancestors = None;
        match reweight_indicator(&self.weights, &self.distances, eps_new)? {
            Some((w, increment)) => {
                self.weights = w;
                self.log_estimate += increment;
                Ok(increment)
            }
            None => {
                self.dead_at = Some(self.steps);
                self.log_estimate = f64::NEG_INFINITY;
                Ok(f64::NEG_INFINITY)
            }
        }
    }

    /// Multinomial resampling when `ess < alpha * N_u`. Returns whether it resampled.
    pub fn resample_if_degenerate<R: Rng + ?Sized>(&mut self, alpha: f64, rng: &mut R) -> Result<bool> {
        let n = self.len();
        if self.weights.ess()? >= alpha * n as f64 {
            return Ok(false);
        }
        let ancestors = weights::multinomial_resample(&self.weights, rng)?;
        self.particles = ancestors.iter().map(|&a| self.particles[a].clone()).collect();
        self.distances = ancestors.iter().map(|&a| self.distances[a]).collect();
        self.weights = WeightedIndexSet::uniform(n);
        self.ancestors = Some(ancestors);
        Ok(true)
    }

    /// Applies `cfg.sweeps()` invariant updates to particle `index`.
    pub fn move_particle<M, R>(&mut self, model: &M, index: usize, cfg: &InnerMoveConfig, rng: &mut R) -> Result<MoveStats>
    where
        M: SimulatorModel<Moved = S>,
        R: Rng + ?Sized,
    {
        let d = self.distances[index];
        if self.weights.log_weights[index] == f64::NEG_INFINITY || !(d <= self.epsilon) {
            return Err(Error::Precondition(format!(
                "particle {index} at distance {d} is outside tolerance {}",
                self.epsilon
            )));
        }
        let (nd, stats) = model
            .move_latent(&mut self.particles[index], &self.theta, self.epsilon, d, cfg, rng)
            .map_err(|e| e.at_particle(index))?;
        if !(nd <= self.epsilon) {
            return Err(Error::Precondition(format!(
                "mover left particle {index} at distance {nd} above tolerance {}",
                self.epsilon
            )));
        }
        self.distances[index] = nd;
        Ok(stats)
    }

    /// Moves every particle with positive weight; zero-weight particles are left
    /// as they are.
    pub fn move_all<M, R>(&mut self, model: &M, cfg: &InnerMoveConfig, rng: &mut R) -> Result<MoveStats>
    where
        M: SimulatorModel<Moved = S>,
        R: Rng + ?Sized,
    {
        let mut total = MoveStats::default();
        for n in 0..self.len() {
            if self.weights.log_weights[n] > f64::NEG_INFINITY {
                total += self.move_particle(model, n, cfg, rng)?;
            }
        }
        self.last_moves = total;
        Ok(total)
    }

    /// One full step: reweight to `eps_new`, resample if degenerate, move.
    pub fn advance<M, R>(&mut self, model: &M, eps_new: f64, settings: &InnerSettings, rng: &mut R) -> Result<InnerStepRecord>
    where
        M: SimulatorModel<Moved = S>,
        R: Rng + ?Sized,
    {
        let increment = self.reweight(eps_new)?;
        let mut record = InnerStepRecord {
            step: self.steps,
            epsilon: eps_new,
            ess: 0.0,
            increment,
            resampled: false,
            acceptance: None,
        };
        if self.is_dead() {
            return Ok(record);
        }
        record.ess = self.weights.ess()?;
        record.resampled = self.resample_if_degenerate(settings.alpha, rng)?;
        record.acceptance = self.move_all(model, &settings.moves, rng)?.rate();
        Ok(record)
    }

    /// Next tolerance in `[floor, eps]` whose CESS over the `N_u` particles is
    /// closest to `beta * N_u`, scored on cached distances only.
    pub fn adapt_epsilon(&self, beta: f64, floor: f64) -> Result<Bisection> {
        if self.is_dead() {
            return Err(Error::degenerate("adapting the tolerance of a dead population"));
        }
        if floor > self.epsilon {
            return Err(Error::Precondition(format!(
                "tolerance floor {floor} above current tolerance {}",
                self.epsilon
            )));
        }
        let w = self.weights.weights();
        let cess_at = |eps: f64| {
            let ratios: Vec<f64> = self
                .distances
                .iter()
                .map(|&d| if d <= eps { 1.0 } else { 0.0 })
                .collect();
            cess(&w, &ratios).unwrap_or(0.0)
        };
        let upper = if self.epsilon.is_finite() {
            self.epsilon
        } else {
            self.max_live_distance().max(floor)
        };
        Ok(bisect_tolerance(cess_at, floor, upper, self.epsilon, beta * self.len() as f64))
    }
}

/// How the inner sampler picks its tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSchedule {
    /// Visit these tolerances in order, then the target if it was not reached.
    Explicit(Vec<f64>),
    /// Choose each tolerance by CESS bisection.
    Adaptive { beta: f64, floor: f64, max_steps: usize },
}

#[derive(Clone, Debug)]
pub struct InnerRun<S> {
    pub population: UPopulation<S>,
    pub log_estimate: f64,
    pub records: Vec<InnerStepRecord>,
}

/// Runs the inner sampler at `theta` until its tolerance is at most `eps_target`.
///
/// The log-likelihood estimate is `-inf` when the population dies; the step of
/// death is available from the returned population.
pub fn run_inner_to<M, R>(
    model: &M,
    theta: &[f64],
    eps_target: f64,
    schedule: &InnerSchedule,
    settings: &InnerSettings,
    rng: &mut R,
) -> Result<InnerRun<M::Moved>>
where
    M: SimulatorModel,
    R: Rng + ?Sized,
{
    settings.validate()?;
    if !(eps_target >= 0.0) {
        return Err(Error::Precondition(format!("target tolerance {eps_target} must be >= 0")));
    }
    let mut pop = UPopulation::init(model, theta, settings.n_u, rng)?;
    let mut records = Vec::new();
    let mut planned = match schedule {
        InnerSchedule::Explicit(eps) => eps.iter().copied(),
        InnerSchedule::Adaptive { .. } => [].iter().copied(),
    };
    while pop.epsilon() > eps_target && !pop.is_dead() {
        let next = match schedule {
            InnerSchedule::Explicit(_) => planned
                .find(|&e| e < pop.epsilon())
                .map_or(eps_target, |e| e.max(eps_target)),
            InnerSchedule::Adaptive { beta, floor, max_steps } => {
                if pop.steps() >= *max_steps {
                    eps_target
                } else {
                    let b = pop.adapt_epsilon(*beta, floor.max(eps_target))?;
                    if b.outcome == BisectOutcome::Stalled {
                        return Err(Error::degenerate(format!(
                            "inner tolerance stalled at {} for theta {theta:?}",
                            pop.epsilon()
                        )));
                    }
                    b.epsilon
                }
            }
        };
        records.push(pop.advance(model, next, settings, rng)?);
    }
    Ok(InnerRun {
        log_estimate: pop.log_estimate(),
        population: pop,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::gaussian::{GaussianModel, GaussianModelConfig};
    use rand::SeedableRng;

    fn model(y: Vec<f64>) -> GaussianModel {
        GaussianModel::new(GaussianModelConfig::with_dim(y.len()), y).unwrap()
    }

    fn with_distances(distances: Vec<f64>) -> UPopulation<Vec<f64>> {
        let n = distances.len();
        UPopulation {
            theta: vec![1.0],
            particles: vec![
                Latent {
                    moved: vec![0.5],
                    fixed: crate::rng::UnitStream::empty()
                };
                n
            ],
            weights: WeightedIndexSet::uniform(n),
            distances,
            ancestors: None,
            epsilon: f64::INFINITY,
            log_estimate: 0.0,
            steps: 0,
            dead_at: None,
            last_moves: MoveStats::default(),
        }
    }

    #[test]
    fn init_is_uniform_at_infinite_tolerance() {
        let m = model(vec![3.0]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = UPopulation::init(&m, &[3.0], 3, &mut rng).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.epsilon(), f64::INFINITY);
        for w in p.weights().weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let q = UPopulation::init(&m, &[3.0], 3, &mut rng).unwrap();
        assert_eq!(p.distances(), q.distances());
    }

    #[test]
    fn reweight_cases() {
        let mut p = with_distances(vec![0.5, 1.0, 3.0, 4.0]);
        assert_eq!(p.reweight(10.0).unwrap(), 0.0);
        assert_eq!(p.reweight(10.0).unwrap(), 0.0);
        let inc = p.reweight(2.0).unwrap();
        assert!((inc - 0.5f64.ln()).abs() < 1e-15);
        assert!((p.log_estimate() - 0.5f64.ln()).abs() < 1e-15);
        assert!(p.reweight(3.0).is_err());
        assert_eq!(p.reweight(0.1).unwrap(), f64::NEG_INFINITY);
        assert_eq!(p.dead_at(), Some(4));
        assert!(p.reweight(0.0).is_err());
    }

    #[test]
    fn resample_threshold_is_strict() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut p = with_distances(vec![1.0; 4]);
        assert!(!p.resample_if_degenerate(0.5, &mut rng).unwrap());
        // Two survivors of four: ESS = 2 = 0.5 * 4, not below the threshold.
        let mut p = with_distances(vec![1.0, 1.0, 5.0, 5.0]);
        p.reweight(2.0).unwrap();
        assert!(!p.resample_if_degenerate(0.5, &mut rng).unwrap());
        let mut distances = vec![5.0; 10];
        distances[7] = 1.0;
        let mut p = with_distances(distances);
        p.reweight(2.0).unwrap();
        assert!(p.resample_if_degenerate(0.5, &mut rng).unwrap());
        assert_eq!(p.ancestors().unwrap(), &[7; 10]);
        assert_eq!(p.distances(), &[1.0; 10]);
    }

    #[test]
    fn moving_a_dead_particle_is_rejected() {
        let m = model(vec![3.0]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut p = UPopulation::init(&m, &[3.0], 50, &mut rng).unwrap();
        let cut = p.distances().iter().copied().fold(0.0, f64::max) * 0.5;
        p.reweight(cut).unwrap();
        let dead = (0..p.len()).find(|&n| p.distances()[n] > cut).unwrap();
        let cfg = InnerMoveConfig::slice(1).unwrap();
        assert!(matches!(
            p.move_particle(&m, dead, &cfg, &mut rng),
            Err(Error::Precondition(_))
        ));
        let stats = p.move_all(&m, &cfg, &mut rng).unwrap();
        assert!(stats.proposed > 0);
        for n in 0..p.len() {
            if p.weights().log_weights[n] > f64::NEG_INFINITY {
                assert!(p.distances()[n] <= cut);
                assert_eq!(
                    p.distances()[n],
                    m.observed_distance(&p.particles()[n], &[3.0]).unwrap()
                );
            }
        }
    }

    #[test]
    fn adapt_with_full_target_keeps_everything() {
        let mut p = with_distances(vec![1.0, 2.0, 3.0, 4.0]);
        p.reweight(6.0).unwrap();
        let b = p.adapt_epsilon(1.0, 0.0).unwrap();
        assert_eq!(b.cess, 4.0);
        assert!(b.epsilon >= 4.0 && b.epsilon < 6.0);
    }

    #[test]
    fn adapt_with_equal_distances() {
        let mut p = with_distances(vec![2.0; 5]);
        p.reweight(3.0).unwrap();
        let b = p.adapt_epsilon(0.5, 1.0).unwrap();
        assert!(b.epsilon >= 2.0 && b.epsilon - 2.0 < 1e-7, "{}", b.epsilon);
        let b = p.adapt_epsilon(0.5, 2.5).unwrap();
        assert_eq!(b.epsilon, 2.5);
        assert_eq!(b.outcome, BisectOutcome::Floor);
    }

    #[test]
    fn adapt_matches_grid_search() {
        let mut p = with_distances(vec![1.0, 2.0, 3.0, 4.0]);
        p.reweight(5.0).unwrap();
        let b = p.adapt_epsilon(0.75, 0.0).unwrap();
        // Grid oracle over [0, 5]: CESS with indicator ratios is N * mass.
        let grid = 10_000;
        let best = (0..=grid)
            .map(|k| 5.0 * k as f64 / grid as f64)
            .map(|e| {
                let mass = [1.0, 2.0, 3.0, 4.0].iter().filter(|&&d| d <= e).count() as f64 / 4.0;
                (e, (4.0 * mass - 3.0).abs())
            })
            .fold((f64::NAN, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        assert_eq!(b.cess, 3.0);
        assert!((b.cess - 3.0).abs() <= best.1);
        assert!(b.epsilon >= 3.0 && b.epsilon < 4.0);
    }

    #[test]
    fn infinite_target_returns_prior_draws() {
        let m = model(vec![3.0, 1.0]);
        let settings = InnerSettings {
            n_u: 20,
            alpha: 0.5,
            moves: InnerMoveConfig::slice(1).unwrap(),
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let run = run_inner_to(
            &m,
            &[3.0],
            f64::INFINITY,
            &InnerSchedule::Adaptive { beta: 0.5, floor: 0.0, max_steps: 100 },
            &settings,
            &mut rng,
        )
        .unwrap();
        assert_eq!(run.log_estimate, 0.0);
        assert!(run.records.is_empty());
    }

    #[test]
    fn single_particle_single_step_is_an_indicator() {
        let m = model(vec![3.0]);
        let settings = InnerSettings {
            n_u: 1,
            alpha: 0.5,
            moves: InnerMoveConfig::slice(1).unwrap(),
        };
        for seed in 0..50 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let run = run_inner_to(&m, &[3.0], 1.0, &InnerSchedule::Explicit(vec![1.0]), &settings, &mut rng).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u = m.sample_latent(&[3.0], &mut rng);
            let d = m.observed_distance(&u, &[3.0]).unwrap();
            let expected = if d <= 1.0 { 0.0 } else { f64::NEG_INFINITY };
            assert_eq!(run.log_estimate, expected);
        }
    }

    #[test]
    fn adaptive_schedules_strictly_decrease() {
        let m = model(vec![3.0, 1.0, 2.0]);
        let settings = InnerSettings {
            n_u: 100,
            alpha: 0.5,
            moves: InnerMoveConfig::slice(1).unwrap(),
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let run = run_inner_to(
            &m,
            &[2.0],
            0.5,
            &InnerSchedule::Adaptive { beta: 0.5, floor: 0.0, max_steps: 200 },
            &settings,
            &mut rng,
        )
        .unwrap();
        assert!(run.log_estimate.is_finite());
        assert_eq!(run.records.last().unwrap().epsilon, 0.5);
        for pair in run.records.windows(2) {
            assert!(pair[1].epsilon < pair[0].epsilon);
        }
        let pop = &run.population;
        for (u, &d) in pop.particles().iter().zip(pop.distances()) {
            assert_eq!(d, m.observed_distance(u, &[2.0]).unwrap());
        }
    }
}
