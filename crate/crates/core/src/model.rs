//! The simulator abstraction `x = H(u, theta)` with `u ~ phi(. | theta)`, plus the
//! uniform box prior over parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::LatentRandomness;

pub type Latent<S> = LatentRandomness<S>;

/// Independent uniform prior on a box. Also the support of every `theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPrior {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxPrior {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidConfig(
                "prior bounds must be non-empty and of equal length".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "prior box needs finite lower < upper, got {lower:?} / {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Open box: boundary points have density zero.
    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| t > l && t < u)
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            -self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| (u - l).ln())
                .sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let v: f64 = rng.sample(rand::distr::Open01);
                l + (u - l) * v
            })
            .collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoverKind {
    /// Coordinate-wise slice sampling with stepping out and shrinkage.
    Slice,
    /// Metropolis-Hastings add/delete moves on seed-graph edges.
    EdgeFlip,
}

/// How inner populations rejuvenate their moved block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerMoveConfig {
    kind: MoverKind,
    sweeps: u32,
    slice_width: f64,
}

impl InnerMoveConfig {
    pub fn new(kind: MoverKind, sweeps: u32, slice_width: f64) -> Result<Self> {
        if sweeps == 0 {
            return Err(Error::InvalidConfig("inner moves need at least one sweep".into()));
        }
        if kind == MoverKind::Slice && !(slice_width > 0.0) {
            return Err(Error::InvalidConfig("slice width must be positive".into()));
        }
        Ok(Self {
            kind,
            sweeps,
            slice_width,
        })
    }

    pub fn slice(sweeps: u32) -> Result<Self> {
        Self::new(MoverKind::Slice, sweeps, 0.25)
    }

    pub fn edge_flip(sweeps: u32) -> Result<Self> {
        Self::new(MoverKind::EdgeFlip, sweeps, 0.0)
    }

    pub fn kind(&self) -> MoverKind {
        self.kind
    }

    pub fn sweeps(&self) -> u32 {
        self.sweeps
    }

    pub fn slice_width(&self) -> f64 {
        self.slice_width
    }
}

/// Proposal/acceptance counts of a batch of MCMC updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveStats {
    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

impl std::ops::AddAssign for MoveStats {
    fn add_assign(&mut self, rhs: Self) {
        self.proposed += rhs.proposed;
        self.accepted += rhs.accepted;
    }
}

/// A simulator written as a deterministic transform of tractable randomness.
///
/// `transform` must be a pure function of `(u, theta)`. `move_latent` must leave
/// `P_eps(y | H(u, theta)) phi(u_s | theta)` invariant while keeping `u_r`
/// untouched, and report the distance of the new state to the observed data.
pub trait SimulatorModel: Send + Sync {
    type Moved: Clone + std::fmt::Debug + PartialEq + Send + Sync;
    type Output: Clone + Send + Sync;

    fn name(&self) -> &'static str;

    fn prior(&self) -> &BoxPrior;

    /// Truncation bounds of the random-walk proposal on `theta`.
    fn proposal_support(&self) -> (Vec<f64>, Vec<f64>);

    fn observed(&self) -> &Self::Output;

    fn sample_latent<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Latent<Self::Moved>;

    /// Log density of the moved block under `phi`.
    fn log_density_moved(&self, moved: &Self::Moved, theta: &[f64]) -> f64;

    fn transform(&self, u: &Latent<Self::Moved>, theta: &[f64]) -> Result<Self::Output>;

    fn distance(&self, y: &Self::Output, x: &Self::Output) -> Result<f64>;

    /// `distance(y, H(u, theta))` for the observed `y`.
    fn observed_distance(&self, u: &Latent<Self::Moved>, theta: &[f64]) -> Result<f64> {
        let x = self.transform(u, theta)?;
        self.distance(self.observed(), &x)
    }

    /// `cfg.sweeps()` invariant updates of `u.moved` under the tolerance
    /// `epsilon`, starting from a state at distance `distance <= epsilon`.
    /// Returns the distance of the final state.
    fn move_latent<R: Rng + ?Sized>(
        &self,
        u: &mut Latent<Self::Moved>,
        theta: &[f64],
        epsilon: f64,
        distance: f64,
        cfg: &InnerMoveConfig,
        rng: &mut R,
    ) -> Result<(f64, MoveStats)>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_box() {
        let p = BoxPrior::new(vec![0.0], vec![10.0]).unwrap();
        assert!(p.contains(&[3.0]));
        assert!(!p.contains(&[0.0]));
        assert!(!p.contains(&[10.5]));
        assert!((p.log_density(&[1.0]) + 10f64.ln()).abs() < 1e-15);
        assert_eq!(p.log_density(&[-1.0]), f64::NEG_INFINITY);
        assert_eq!(p.mean(), vec![5.0]);
        assert!(BoxPrior::new(vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn zero_sweeps_rejected() {
        assert!(InnerMoveConfig::slice(0).is_err());
        assert!(InnerMoveConfig::edge_flip(0).is_err());
        assert_eq!(InnerMoveConfig::edge_flip(2).unwrap().sweeps(), 2);
    }
}
