//! Truncated-at-zero Gaussian model: `x_i = sigma * |Phi^{-1}(u_i)|`, `u_i ~ U(0, 1)`,
//! with a uniform prior on `sigma` and squared Euclidean distance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::normal;
use crate::error::{Error, Result};
use crate::latent::LatentRandomness;
use crate::model::{BoxPrior, InnerMoveConfig, Latent, MoveStats, MoverKind, SimulatorModel};
use crate::rng::UnitStream;
use crate::slice::slice_update_indicator;

pub const UNIT_CLAMP: f64 = 1e-15;

/// Relative margin around the tolerance inside which a candidate's distance
/// is summed exactly.
const SCREEN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianModelConfig {
    pub d: usize,
    pub prior_lower: f64,
    pub prior_upper: f64,
    /// Generating sigma used when synthesizing data.
    pub true_sigma: f64,
    /// Put all randomness in the unmoved block `u_r`, so inner moves are
    /// no-ops. With it, RE-ABC-SMC2 reduces to ABC-SMC.
    pub all_fixed: bool,
}

impl Default for GaussianModelConfig {
    fn default() -> Self {
        Self {
            d: 25,
            prior_lower: 0.0,
            prior_upper: 10.0,
            true_sigma: 3.0,
            all_fixed: false,
        }
    }
}

impl GaussianModelConfig {
    pub fn with_dim(d: usize) -> Self {
        Self {
            d,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidConfig("Gaussian model needs d >= 1".into()));
        }
        if !(self.prior_lower < self.prior_upper) || self.prior_lower < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "prior box must satisfy 0 <= lower < upper, got ({}, {})",
                self.prior_lower, self.prior_upper
            )));
        }
        Ok(())
    }
}

/// `x_i = theta * |Phi^{-1}(u_i)|`. Components of `u` at 0 or 1 are clamped to
/// `(1e-15, 1 - 1e-15)`; the flag reports whether that happened.
pub fn gaussian_transform(u: &[f64], theta: f64) -> (Vec<f64>, bool) {
    let mut clamped = false;
    let x = u
        .iter()
        .map(|&ui| {
            let v = if ui <= 0.0 || ui >= 1.0 {
                clamped = true;
                ui.clamp(UNIT_CLAMP, 1.0 - UNIT_CLAMP)
            } else {
                ui
            };
            theta * normal::quantile(v).abs()
        })
        .collect();
    (x, clamped)
}

/// Sum of squared differences, accumulated left to right.
pub fn gaussian_distance(y: &[f64], x: &[f64]) -> Result<f64> {
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: x.len(),
        });
    }
    Ok(y.iter()
        .zip(x)
        .fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b)))
}

#[derive(Clone, Debug)]
pub struct GaussianModel {
    config: GaussianModelConfig,
    y: Vec<f64>,
    prior: BoxPrior,
}

impl GaussianModel {
    pub fn new(config: GaussianModelConfig, y: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if y.len() != config.d {
            return Err(Error::DimensionMismatch {
                expected: config.d,
                actual: y.len(),
            });
        }
        let prior = BoxPrior::new(vec![config.prior_lower], vec![config.prior_upper])?;
        Ok(Self { config, y, prior })
    }

    pub fn config(&self) -> &GaussianModelConfig {
        &self.config
    }

    /// Draws `d` points from the truncated Gaussian with the configured sigma.
    pub fn synthesize<R: Rng + ?Sized>(config: &GaussianModelConfig, rng: &mut R) -> Vec<f64> {
        let u: Vec<f64> = (0..config.d)
            .map(|_| rng.sample(rand::distr::Open01))
            .collect();
        gaussian_transform(&u, config.true_sigma).0
    }

    fn units<'a>(&self, u: &'a Latent<Vec<f64>>) -> Result<&'a [f64]> {
        let units: &[f64] = if self.config.all_fixed {
            match &u.fixed {
                UnitStream::Recorded(v) => v,
                UnitStream::Keyed(_) => {
                    return Err(Error::Precondition(
                        "Gaussian latent streams must be recorded".into(),
                    ))
                }
            }
        } else {
            &u.moved
        };
        if units.len() != self.config.d {
            return Err(Error::DimensionMismatch {
                expected: self.config.d,
                actual: units.len(),
            });
        }
        Ok(units)
    }

    #[inline]
    fn term(&self, i: usize, theta: f64, unit: f64) -> f64 {
        let diff = self.y[i] - theta * normal::quantile(unit).abs();
        diff * diff
    }
}

impl SimulatorModel for GaussianModel {
    type Moved = Vec<f64>;
    type Output = Vec<f64>;

    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn prior(&self) -> &BoxPrior {
        &self.prior
    }

    fn proposal_support(&self) -> (Vec<f64>, Vec<f64>) {
        // Truncated at zero only; proposals above the prior box are rejected by the prior.
        (vec![self.config.prior_lower], vec![f64::INFINITY])
    }

    fn observed(&self) -> &Vec<f64> {
        &self.y
    }

    fn sample_latent<R: Rng + ?Sized>(&self, _theta: &[f64], rng: &mut R) -> Latent<Vec<f64>> {
        let units: Vec<f64> = (0..self.config.d)
            .map(|_| rng.sample(rand::distr::Open01))
            .collect();
        if self.config.all_fixed {
            LatentRandomness {
                moved: Vec::new(),
                fixed: UnitStream::Recorded(units),
            }
        } else {
            LatentRandomness {
                moved: units,
                fixed: UnitStream::empty(),
            }
        }
    }

    fn log_density_moved(&self, moved: &Vec<f64>, _theta: &[f64]) -> f64 {
        if moved.iter().all(|&v| v > 0.0 && v < 1.0) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn transform(&self, u: &Latent<Vec<f64>>, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(gaussian_transform(self.units(u)?, theta[0]).0)
    }

    fn distance(&self, y: &Vec<f64>, x: &Vec<f64>) -> Result<f64> {
        gaussian_distance(y, x)
    }

    fn observed_distance(&self, u: &Latent<Vec<f64>>, theta: &[f64]) -> Result<f64> {
        let units = self.units(u)?;
        Ok((0..self.config.d).fold(0.0, |acc, i| acc + self.term(i, theta[0], units[i])))
    }

    fn move_latent<R: Rng + ?Sized>(
        &self,
        u: &mut Latent<Vec<f64>>,
        theta: &[f64],
        epsilon: f64,
        distance: f64,
        cfg: &InnerMoveConfig,
        rng: &mut R,
    ) -> Result<(f64, MoveStats)> {
        if cfg.kind() != MoverKind::Slice {
            return Err(Error::InvalidConfig(
                "the Gaussian model moves its latent block by slice sampling".into(),
            ));
        }
        let mut stats = MoveStats::default();
        if self.config.all_fixed {
            return Ok((distance, stats));
        }
        let d = self.config.d;
        if u.moved.len() != d {
            return Err(Error::Precondition(format!(
                "moved block has {} coordinates, expected {d}",
                u.moved.len()
            )));
        }
        let sigma = theta[0];
        let mut terms: Vec<f64> = (0..d).map(|i| self.term(i, sigma, u.moved[i])).collect();
        // prefix[k] = terms[0] + ... + terms[k-1], accumulated left to right, so
        // the exact total below is bit-identical to `observed_distance`. The
        // suffix sums only screen candidates far from the boundary.
        let mut prefix = vec![0.0; d + 1];
        for k in 0..d {
            prefix[k + 1] = prefix[k] + terms[k];
        }
        let mut suffix = vec![0.0; d + 1];
        let (below, above) = (epsilon * (1.0 - SCREEN_TOL), epsilon * (1.0 + SCREEN_TOL));
        for _ in 0..cfg.sweeps() {
            for k in (0..d).rev() {
                suffix[k] = terms[k] + suffix[k + 1];
            }
            for i in 0..d {
                let mut last = (f64::NAN, f64::NAN);
                let draw = {
                    let inside = |v: f64| {
                        if !(v > 0.0 && v < 1.0) {
                            return false;
                        }
                        let t = self.term(i, sigma, v);
                        last = (v, t);
                        let approx = prefix[i] + t + suffix[i + 1];
                        if approx < below {
                            true
                        } else if approx > above {
                            false
                        } else {
                            terms[i + 1..].iter().fold(prefix[i] + t, |acc, &x| acc + x) <= epsilon
                        }
                    };
                    slice_update_indicator(u.moved[i], inside, cfg.slice_width(), rng)
                };
                stats.proposed += 1;
                if draw.value != u.moved[i] {
                    stats.accepted += 1;
                }
                u.moved[i] = draw.value;
                terms[i] = if last.0 == draw.value { last.1 } else { self.term(i, sigma, draw.value) };
                prefix[i + 1] = prefix[i] + terms[i];
            }
        }
        Ok((prefix[d], stats))
    }
}
