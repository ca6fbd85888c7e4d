//! Reference values for the Gaussian model, computed without any of the
//! samplers: closed-form acceptance probabilities integrated over `sigma` by the
//! trapezoid rule, or brute-force simulation on a `sigma` grid for `d > 1`.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use libm::erfc;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// `P((y - theta |Z|)^2 <= eps)` for `Z ~ N(0, 1)`.
pub fn acceptance_probability_d1(y: f64, theta: f64, epsilon: f64) -> f64 {
    if epsilon.is_infinite() {
        return 1.0;
    }
    let s = epsilon.sqrt();
    if theta <= 0.0 {
        return if y * y <= epsilon { 1.0 } else { 0.0 };
    }
    let hi = (y + s) / theta;
    if hi <= 0.0 {
        return 0.0;
    }
    let lo = ((y - s) / theta).max(0.0);
    // P(lo <= |Z| <= hi) = erfc(lo / sqrt2) - erfc(hi / sqrt2)
    (erfc(lo / SQRT_2) - erfc(hi / SQRT_2)).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorOracle {
    /// ABC-posterior mean of `sigma`.
    pub mean: f64,
    /// ABC-posterior standard deviation of `sigma`.
    pub sd: f64,
    /// Prior-predictive probability `P(distance <= eps)`.
    pub evidence: f64,
    /// Exact (non-ABC) posterior mean under the half-normal likelihood.
    pub exact_mean: f64,
}

/// Trapezoid moments `(int f, int theta f, int theta^2 f)` on `n` uniform intervals.
fn trapezoid_moments(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (f64, f64, f64) {
    let h = (hi - lo) / n as f64;
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for k in 0..=n {
        let t = lo + h * k as f64;
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        let v = w * f(t);
        m0 += v;
        m1 += v * t;
        m2 += v * t * t;
    }
    (m0 * h, m1 * h, m2 * h)
}

fn half_normal_log_likelihood(y: &[f64], theta: f64) -> f64 {
    if theta <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let c = (2.0 / std::f64::consts::PI).sqrt().ln();
    y.iter()
        .map(|yi| c - theta.ln() - yi * yi / (2.0 * theta * theta))
        .sum()
}

/// Exact half-normal posterior mean of `sigma` under a uniform prior box.
pub fn exact_posterior_mean(y: &[f64], prior: (f64, f64), grid: usize) -> f64 {
    let (lo, hi) = prior;
    let h = (hi - lo) / grid as f64;
    let peak = (0..=grid)
        .map(|k| half_normal_log_likelihood(y, lo + h * k as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    let (m0, m1, _) = trapezoid_moments(
        |t| (half_normal_log_likelihood(y, t) - peak).exp(),
        lo,
        hi,
        grid,
    );
    m1 / m0
}

/// ABC posterior of `sigma` for the d = 1 Gaussian model.
///
/// Trapezoid rule on `grid` intervals; the result is recomputed on `2 * grid`
/// intervals and the oracle fails unless mean and evidence agree to `1e-9`.
pub fn gaussian_posterior_oracle(
    y: &[f64],
    prior: (f64, f64),
    epsilon: f64,
    grid: usize,
) -> Result<PosteriorOracle> {
    if y.len() != 1 {
        return Err(Error::InvalidConfig(
            "quadrature oracle is exact only for d = 1; use the brute-force oracle".into(),
        ));
    }
    let (lo, hi) = prior;
    let exact_mean = exact_posterior_mean(y, prior, grid);
    if epsilon.is_infinite() {
        let width = hi - lo;
        return Ok(PosteriorOracle {
            mean: 0.5 * (lo + hi),
            sd: width / 12f64.sqrt(),
            evidence: 1.0,
            exact_mean,
        });
    }
    let f = |t: f64| acceptance_probability_d1(y[0], t, epsilon);
    let summarize = |n: usize| {
        let (m0, m1, m2) = trapezoid_moments(f, lo, hi, n);
        let mean = m1 / m0;
        (mean, (m2 / m0 - mean * mean).max(0.0).sqrt(), m0 / (hi - lo))
    };
    let (mean, sd, evidence) = summarize(grid);
    let (mean2, _, evidence2) = summarize(2 * grid);
    if !mean.is_finite() || (mean - mean2).abs() > 1e-9 || (evidence - evidence2).abs() > 1e-9 * evidence.max(1e-300) + 1e-15 {
        return Err(Error::InvalidConfig(format!(
            "quadrature did not converge: mean {mean} vs {mean2}, evidence {evidence} vs {evidence2}"
        )));
    }
    Ok(PosteriorOracle {
        mean: mean2,
        sd,
        evidence: evidence2,
        exact_mean,
    })
}

/// Brute-force ABC posterior for any `d`: `P(distance <= eps | sigma)` is
/// estimated with `samples_per_point` direct simulations at each of
/// `grid + 1` values of `sigma`, then integrated by the trapezoid rule.
pub fn gaussian_posterior_brute_force(
    y: &[f64],
    prior: (f64, f64),
    epsilon: f64,
    grid: usize,
    samples_per_point: usize,
    seed: u64,
) -> PosteriorOracle {
    let (lo, hi) = prior;
    let h = (hi - lo) / grid as f64;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let probs: Vec<f64> = (0..=grid)
        .map(|k| {
            let theta = lo + h * k as f64;
            let hits = (0..samples_per_point)
                .filter(|_| {
                    let mut dist = 0.0;
                    for &yi in y {
                        let z: f64 = rng.sample(rand_distr::StandardNormal);
                        let diff = yi - theta * z.abs();
                        dist += diff * diff;
                        if dist > epsilon {
                            return false;
                        }
                    }
                    true
                })
                .count();
            hits as f64 / samples_per_point as f64
        })
        .collect();
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (k, p) in probs.iter().enumerate() {
        let t = lo + h * k as f64;
        let w = if k == 0 || k == grid { 0.5 } else { 1.0 } * p;
        m0 += w;
        m1 += w * t;
        m2 += w * t * t;
    }
    let mean = m1 / m0;
    PosteriorOracle {
        mean,
        sd: (m2 / m0 - mean * mean).max(0.0).sqrt(),
        evidence: m0 * h / (hi - lo),
        exact_mean: exact_posterior_mean(y, prior, 100_000),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_tolerance_returns_prior() {
        let o = gaussian_posterior_oracle(&[3.0], (0.0, 10.0), f64::INFINITY, 1000).unwrap();
        assert_eq!(o.mean, 5.0);
        assert_eq!(o.evidence, 1.0);
    }

    #[test]
    fn converges_under_grid_doubling() {
        let o = gaussian_posterior_oracle(&[3.0], (0.0, 10.0), 0.25, 100_000).unwrap();
        assert!(o.mean > 2.0 && o.mean < 6.0);
        assert!(o.evidence > 0.0 && o.evidence < 1.0);
        // Exact posterior for one half-normal point y = 3 on (0, 10) is right-skewed.
        assert!(o.exact_mean > 3.0);
    }

    #[test]
    fn acceptance_probability_limits() {
        assert_eq!(acceptance_probability_d1(3.0, 0.0, 1.0), 0.0);
        assert_eq!(acceptance_probability_d1(0.5, 0.0, 1.0), 1.0);
        assert!((acceptance_probability_d1(3.0, 1.0, 1e6) - 1.0).abs() < 1e-15);
        // Small tolerance: density approximation 2 * phi(y/theta)/theta * 2 sqrt(eps).
        let (y, t, e) = (3.0_f64, 3.0_f64, 1e-8_f64);
        let approx = 2.0 * (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt() / t * 2.0 * e.sqrt();
        assert!((acceptance_probability_d1(y, t, e) / approx - 1.0).abs() < 1e-4);
    }

    #[test]
    fn brute_force_agrees_with_quadrature_at_d1() {
        let q = gaussian_posterior_oracle(&[3.0], (0.0, 10.0), 1.0, 20_000).unwrap();
        let b = gaussian_posterior_brute_force(&[3.0], (0.0, 10.0), 1.0, 100, 20_000, 4);
        assert!((q.mean - b.mean).abs() < 0.05, "{} vs {}", q.mean, b.mean);
        assert!((q.evidence - b.evidence).abs() < 0.01);
    }
}
