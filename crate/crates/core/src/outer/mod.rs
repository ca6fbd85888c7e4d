//! Outer SMC samplers on `theta`.
//!
//! Both ABC-SMC and rare-event ABC-SMC2 run through [`OuterSampler`]. They
//! differ only in what each particle carries to estimate its likelihood:
//! [`RawSims`] holds `N_x` direct simulations, and an inner
//! [`UPopulation`](crate::inner::UPopulation) holds a rare-event SMC on `u`.

mod result;
mod sampler;

pub use result::{RunResult, StepDiagnostics, StopReason};
pub use sampler::{run_abc_smc, run_re_abc_smc2, run_smc, AdaptConfig, OuterSampler, SmcConfig, StopRule};

use rand::Rng;
use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::inner::{reweight_indicator, InnerSettings, UPopulation};
use crate::model::SimulatorModel;
use crate::weights::{SurvivalCurve, WeightedIndexSet};

/// One outer particle. Its weight lives in the sampler's weight vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaParticle<P> {
    pub theta: Vec<f64>,
    pub payload: P,
}

/// What an outer particle carries to estimate `P_eps(y | theta)`.
pub trait Payload<M: SimulatorModel>: Clone + Send + Sync + Sized {
    type Settings: Clone + Debug + Send + Sync;

    /// Fresh payload at `theta` with tolerance `inf`.
    fn init<R: Rng + ?Sized>(model: &M, theta: &[f64], settings: &Self::Settings, rng: &mut R) -> Result<Self>;

    /// Moves to the tolerance `epsilon`. Returns the log incremental weight
    /// and, when the payload runs MCMC, its acceptance rate.
    fn advance<R: Rng + ?Sized>(
        &mut self,
        model: &M,
        epsilon: f64,
        settings: &Self::Settings,
        rng: &mut R,
    ) -> Result<(f64, Option<f64>)>;

    /// Log likelihood estimate at the current tolerance.
    fn log_likelihood(&self) -> f64;

    /// Surviving mass as a function of a candidate next tolerance; its value
    /// is the incremental weight of reweighting to that tolerance.
    fn survival_curve(&self) -> SurvivalCurve;

    /// Largest distance still carrying weight.
    fn max_live_distance(&self) -> f64;

    /// Fresh payload at `theta` advanced through `schedule`. Stops early once
    /// the estimate reaches zero.
    fn fresh<R: Rng + ?Sized>(
        model: &M,
        theta: &[f64],
        settings: &Self::Settings,
        schedule: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::init(model, theta, settings, rng)?;
        for &eps in schedule {
            p.advance(model, eps, settings, rng)?;
            if p.log_likelihood() == f64::NEG_INFINITY {
                break;
            }
        }
        Ok(p)
    }

    /// Like [`Payload::fresh`], but gives up and returns `None` as soon as the
    /// log estimate is at or below `floor`. Every increment is `<= 0`, so the
    /// final estimate would be at or below `floor` too.
    fn fresh_above<R: Rng + ?Sized>(
        model: &M,
        theta: &[f64],
        settings: &Self::Settings,
        schedule: &[f64],
        floor: f64,
        rng: &mut R,
    ) -> Result<Option<Self>> {
        let mut p = Self::init(model, theta, settings, rng)?;
        for &eps in schedule {
            p.advance(model, eps, settings, rng)?;
            if p.log_likelihood() <= floor {
                return Ok(None);
            }
        }
        Ok((p.log_likelihood() > floor).then_some(p))
    }
}

/// `N_x` direct simulations at one `theta`, stored as their distances to `y`.
///
/// The likelihood estimate is the fraction of simulations within tolerance.
/// It is tracked as a product of ratios through uniform weights on the
/// surviving simulations, the same arithmetic the inner sampler uses.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSims {
    distances: Vec<f64>,
    weights: WeightedIndexSet,
    log_likelihood: f64,
    epsilon: f64,
}

impl RawSims {
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Number of simulations within the current tolerance.
    pub fn surviving(&self) -> usize {
        self.distances.iter().filter(|&&d| d <= self.epsilon).count()
    }
}

impl<M: SimulatorModel> Payload<M> for RawSims {
    /// `N_x`.
    type Settings = usize;

    fn init<R: Rng + ?Sized>(model: &M, theta: &[f64], n_x: &usize, rng: &mut R) -> Result<Self> {
        if *n_x == 0 {
            return Err(Error::InvalidConfig("N_x must be at least 1".into()));
        }
        let distances = (0..*n_x)
            .map(|n| {
                let u = model.sample_latent(theta, rng);
                model.observed_distance(&u, theta).map_err(|e| e.at_particle(n))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            distances,
            weights: WeightedIndexSet::uniform(*n_x),
            log_likelihood: 0.0,
            epsilon: f64::INFINITY,
        })
    }

    fn advance<R: Rng + ?Sized>(&mut self, _model: &M, epsilon: f64, _n_x: &usize, _rng: &mut R) -> Result<(f64, Option<f64>)> {
        if self.log_likelihood == f64::NEG_INFINITY {
            return Err(Error::Precondition("advancing simulations with zero likelihood".into()));
        }
        if !(epsilon <= self.epsilon) {
            return Err(Error::Precondition(format!(
                "tolerance {epsilon} above current {}",
                self.epsilon
            )));
        }
        self.epsilon = epsilon;
        match reweight_indicator(&self.weights, &self.distances, epsilon)? {
            Some((w, increment)) => {
                self.weights = w;
                self.log_likelihood += increment;
                Ok((increment, None))
            }
            None => {
                self.log_likelihood = f64::NEG_INFINITY;
                Ok((f64::NEG_INFINITY, None))
            }
        }
    }

    fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    fn survival_curve(&self) -> SurvivalCurve {
        SurvivalCurve::new(&self.weights.log_weights, &self.distances)
    }

    fn max_live_distance(&self) -> f64 {
        self.distances
            .iter()
            .copied()
            .filter(|&d| d <= self.epsilon)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl<M: SimulatorModel> Payload<M> for UPopulation<M::Moved> {
    type Settings = InnerSettings;

    fn init<R: Rng + ?Sized>(model: &M, theta: &[f64], settings: &InnerSettings, rng: &mut R) -> Result<Self> {
        settings.validate()?;
        UPopulation::init(model, theta, settings.n_u, rng)
    }

    fn advance<R: Rng + ?Sized>(
        &mut self,
        model: &M,
        epsilon: f64,
        settings: &InnerSettings,
        rng: &mut R,
    ) -> Result<(f64, Option<f64>)> {
        let record = UPopulation::advance(self, model, epsilon, settings, rng)?;
        Ok((record.increment, record.acceptance))
    }

    fn log_likelihood(&self) -> f64 {
        self.log_estimate()
    }

    fn survival_curve(&self) -> SurvivalCurve {
        UPopulation::survival_curve(self)
    }

    fn max_live_distance(&self) -> f64 {
        UPopulation::max_live_distance(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::gaussian::{GaussianModel, GaussianModelConfig};
    use rand::SeedableRng;

    #[test]
    fn raw_sims_track_the_count_ratio() {
        let model = GaussianModel::new(GaussianModelConfig::with_dim(1), vec![3.0]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut sims = <RawSims as Payload<GaussianModel>>::init(&model, &[3.0], &50, &mut rng).unwrap();
        let mut sorted = sims.distances().to_vec();
        sorted.sort_by(f64::total_cmp);
        let eps1 = sorted[29];
        let eps2 = sorted[9];
        let (inc, _) = Payload::<GaussianModel>::advance(&mut sims, &model, eps1, &50, &mut rng).unwrap();
        assert!((inc - (30.0f64 / 50.0).ln()).abs() < 1e-14);
        let (inc, _) = Payload::<GaussianModel>::advance(&mut sims, &model, eps2, &50, &mut rng).unwrap();
        assert!((inc - (10.0f64 / 30.0).ln()).abs() < 1e-14);
        let ll = Payload::<GaussianModel>::log_likelihood(&sims);
        assert!((ll - (10.0f64 / 50.0).ln()).abs() < 1e-14);
        assert_eq!(sims.surviving(), 10);
        // Ratio of counts, as in the direct N_x-average estimator.
        let curve = Payload::<GaussianModel>::survival_curve(&sims);
        assert!((curve.mass(sorted[4]) - 0.5).abs() < 1e-15);
    }
}
