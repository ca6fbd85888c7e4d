//! Log-space weight arithmetic shared by the inner and outer samplers: the
//! indicator ABC kernel, normalization, ESS and multinomial resampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unnormalized uniform ABC kernel: `0.0` (weight one) when `distance <= epsilon`,
/// `-inf` otherwise. The boundary is closed. `epsilon` may be `+inf`.
#[inline]
pub fn kernel_log_weight(distance: f64, epsilon: f64) -> Result<f64> {
    if !(distance >= 0.0) {
        return Err(Error::NegativeDistance(distance));
    }
    debug_assert!(epsilon >= 0.0, "tolerance must be nonnegative");
    Ok(if distance <= epsilon { 0.0 } else { f64::NEG_INFINITY })
}

/// `log(sum(exp(xs)))` with a max shift. Returns `-inf` for an empty slice or
/// when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Log-weights of a particle system.
///
/// When `normalized` is set, `exp(log_weights)` sums to one and `log_sum` holds
/// the log of the weight total before normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedIndexSet {
    pub log_weights: Vec<f64>,
    pub normalized: bool,
    pub log_sum: f64,
}

impl WeightedIndexSet {
    pub fn from_log_weights(log_weights: Vec<f64>) -> Self {
        Self {
            log_weights,
            normalized: false,
            log_sum: f64::NAN,
        }
    }

    /// `n` equal weights, already normalized.
    pub fn uniform(n: usize) -> Self {
        let lw = -(n as f64).ln();
        Self {
            log_weights: vec![lw; n],
            normalized: true,
            log_sum: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// Linear-scale weights.
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|lw| lw.exp()).collect()
    }

    pub fn normalize(self) -> Result<Self> {
        normalize(self)
    }

    pub fn ess(&self) -> Result<f64> {
        ess(self)
    }
}

/// Normalizes in log space.
///
/// Each weight becomes `(lw - max) - ln(sum(exp(lw - max)))`. Particles that
/// carry equal log-weights therefore get exactly `-ln(count)` regardless of
/// the history that produced them. A set that is already normalized is
/// returned as is, with `log_sum = 0`.
pub fn normalize(mut w: WeightedIndexSet) -> Result<WeightedIndexSet> {
    if w.normalized {
        w.log_sum = 0.0;
        return Ok(w);
    }
    let max = w
        .log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::degenerate(format!(
            "normalizing {} log-weights",
            w.log_weights.len()
        )));
    }
    let sum: f64 = w.log_weights.iter().map(|&x| (x - max).exp()).sum();
    let ln_sum = sum.ln();
    for lw in &mut w.log_weights {
        *lw = (*lw - max) - ln_sum;
    }
    w.log_sum = max + ln_sum;
    w.normalized = true;
    Ok(w)
}

/// Effective sample size `1 / sum(w^2)` of a normalized set.
pub fn ess(w: &WeightedIndexSet) -> Result<f64> {
    if !w.normalized {
        return Err(Error::NotNormalized("computing the ESS"));
    }
    let sum_sq: f64 = w.log_weights.iter().map(|&lw| (2.0 * lw).exp()).sum();
    if !(sum_sq > 0.0) {
        return Err(Error::degenerate("ESS of an all-zero weight vector"));
    }
    Ok(1.0 / sum_sq)
}

/// Draws `w.len()` ancestor indices i.i.d. from the categorical distribution
/// given by the normalized weights.
pub fn multinomial_resample<R: Rng + ?Sized>(
    w: &WeightedIndexSet,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if !w.normalized {
        return Err(Error::NotNormalized("multinomial resampling"));
    }
    let n = w.len();
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &lw in &w.log_weights {
        acc += lw.exp();
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::degenerate("multinomial resampling"));
    }
    let last_positive = cdf
        .iter()
        .zip(&w.log_weights)
        .rposition(|(_, &lw)| lw > f64::NEG_INFINITY)
        .unwrap_or(0);
    Ok((0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            // First index whose cumulative weight exceeds u; zero-weight
            // entries never satisfy this strictly.
            cdf.partition_point(|&c| c <= u).min(last_positive)
        })
        .collect())
}

/// Mass of a normalized weight vector that survives the indicator kernel at
/// `epsilon`, evaluated on precomputed distances: `log sum_n w_n 1{d_n <= eps}`.
///
/// Survivors with equal log-weight `lw` yield exactly `lw + ln(count)`.
pub fn log_surviving_mass(log_weights: &[f64], distances: &[f64], epsilon: f64) -> f64 {
    debug_assert_eq!(log_weights.len(), distances.len());
    let mut max = f64::NEG_INFINITY;
    for (&lw, &d) in log_weights.iter().zip(distances) {
        if d <= epsilon && lw > max {
            max = lw;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = log_weights
        .iter()
        .zip(distances)
        .filter(|(_, &d)| d <= epsilon)
        .map(|(&lw, _)| (lw - max).exp())
        .sum();
    max + sum.ln()
}

/// Piecewise-constant map `epsilon -> sum_n w_n 1{d_n <= epsilon}` for one weighted
/// cloud, built once so candidate tolerances can be scored by binary search.
#[derive(Clone, Debug)]
pub struct SurvivalCurve {
    sorted_distances: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SurvivalCurve {
    pub fn new(log_weights: &[f64], distances: &[f64]) -> Self {
        let mut pairs: Vec<(f64, f64)> = distances
            .iter()
            .zip(log_weights)
            .filter(|(_, &lw)| lw > f64::NEG_INFINITY)
            .map(|(&d, &lw)| (d, lw.exp()))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        let (sorted_distances, cumulative) = pairs
            .into_iter()
            .map(|(d, w)| {
                acc += w;
                (d, acc)
            })
            .unzip();
        Self {
            sorted_distances,
            cumulative,
        }
    }

    /// Surviving weight at `epsilon` (closed boundary).
    pub fn mass(&self, epsilon: f64) -> f64 {
        let k = self.sorted_distances.partition_point(|&d| d <= epsilon);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// Largest distance carrying positive weight, `-inf` when empty.
    pub fn max_distance(&self) -> f64 {
        self.sorted_distances
            .last()
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }
}
