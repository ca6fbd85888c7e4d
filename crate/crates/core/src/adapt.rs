//! Adaptive tuning shared by both SMC levels: conditional ESS, tolerance
//! bisection and the adaptive number of MCMC iterations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Conditional effective sample size `N (sum w r)^2 / sum w r^2` of
/// incremental ratios `r` under normalized linear weights `w`.
pub fn cess(prev_weights: &[f64], ratios: &[f64]) -> Result<f64> {
    if prev_weights.len() != ratios.len() {
        return Err(Error::DimensionMismatch {
            expected: prev_weights.len(),
            actual: ratios.len(),
        });
    }
    let (mut first, mut second) = (0.0, 0.0);
    for (&w, &r) in prev_weights.iter().zip(ratios) {
        first += w * r;
        second += w * r * r;
    }
    if !(second > 0.0) {
        return Err(Error::degenerate("CESS with every incremental ratio zero"));
    }
    Ok(prev_weights.len() as f64 * first * first / second)
}

/// How the bisection ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BisectOutcome {
    /// Converged on a crossing of the target inside the bracket.
    Crossing,
    /// The target is not reached even at the floor.
    Floor,
    /// No tolerance below the upper end keeps any weight alive.
    Stalled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bisection {
    pub epsilon: f64,
    pub cess: f64,
    pub outcome: BisectOutcome,
}

pub const BISECT_MAX_ITER: usize = 50;
pub const BISECT_REL_WIDTH: f64 = 1e-8;

/// Finds the tolerance in `[floor, upper]` whose CESS is closest to `target`.
///
/// `cess_at` must return the CESS of reweighting to a candidate tolerance, or
/// `0.0` when no weight survives. CESS is evaluated at the upper end first; the
/// search keeps `cess(lo) < target <= cess(hi)` and stops after
/// [`BISECT_MAX_ITER`] halvings or once the bracket is narrower than
/// [`BISECT_REL_WIDTH`] times `upper`. Of the two final ends the one closer to
/// the target wins, except that a dead lower end is never chosen. The result
/// is strictly below `exclusive_max` unless the run has stalled.
pub fn bisect_tolerance(
    cess_at: impl Fn(f64) -> f64,
    floor: f64,
    upper: f64,
    exclusive_max: f64,
    target: f64,
) -> Bisection {
    let at_floor = cess_at(floor);
    if at_floor >= target || upper <= floor {
        return Bisection {
            epsilon: floor,
            cess: at_floor,
            outcome: BisectOutcome::Floor,
        };
    }
    let (mut lo, mut hi) = (floor, upper);
    let (mut c_lo, mut c_hi) = (at_floor, cess_at(upper));
    if c_hi >= target {
        let min_width = BISECT_REL_WIDTH * upper;
        for _ in 0..BISECT_MAX_ITER {
            if hi - lo < min_width {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let c = cess_at(mid);
            if c >= target {
                hi = mid;
                c_hi = c;
            } else {
                lo = mid;
                c_lo = c;
            }
        }
    } else {
        // Target unreachable inside the bracket; settle for the better end.
        lo = floor;
    }
    let lo_alive = c_lo > 0.0;
    let hi_allowed = hi < exclusive_max;
    let pick_lo = lo_alive && (!hi_allowed || (c_lo - target).abs() < (c_hi - target).abs());
    if pick_lo {
        Bisection {
            epsilon: lo,
            cess: c_lo,
            outcome: BisectOutcome::Crossing,
        }
    } else if hi_allowed {
        Bisection {
            epsilon: hi,
            cess: c_hi,
            outcome: BisectOutcome::Crossing,
        }
    } else {
        Bisection {
            epsilon: hi,
            cess: c_hi,
            outcome: BisectOutcome::Stalled,
        }
    }
}

/// Number of MCMC iterations giving each particle an estimated probability
/// `1 - c` of moving at least once: `ceil(ln c / ln(1 - p_acc))`, clamped to
/// `[1, cap]`.
pub fn adapt_num_moves(acceptance: f64, c: f64, cap: usize) -> usize {
    let cap = cap.max(1);
    if !(acceptance > 0.0) {
        return cap;
    }
    if acceptance >= 1.0 {
        return 1;
    }
    let n = (c.ln() / (1.0 - acceptance).ln()).ceil();
    if !n.is_finite() || n >= cap as f64 {
        cap
    } else {
        (n as usize).max(1)
    }
}
