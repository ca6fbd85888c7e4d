//! Univariate slice sampling with stepping out and shrinkage (Neal, 2003).

use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceDraw {
    pub value: f64,
    pub log_density: f64,
    pub evaluations: u32,
}

/// One slice-sampling update of `x0` under the unnormalized log density
/// `log_f`, with initial bracket width `width` and at most `max_steps`
/// stepping-out expansions (`None` for no limit).
///
/// `log_f_x0` must equal `log_f(x0)` and be finite.
pub fn slice_update<R, F>(
    x0: f64,
    log_f_x0: f64,
    mut log_f: F,
    width: f64,
    max_steps: Option<u32>,
    rng: &mut R,
) -> SliceDraw
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    debug_assert!(log_f_x0.is_finite());
    let mut evaluations = 0u32;
    let mut eval = |x: f64| {
        evaluations += 1;
        log_f(x)
    };

    // Slice level, in log scale.
    let level = log_f_x0 + rng.random::<f64>().ln();

    let mut left = x0 - width * rng.random::<f64>();
    let mut right = left + width;
    match max_steps {
        None => {
            while level < eval(left) {
                left -= width;
            }
            while level < eval(right) {
                right += width;
            }
        }
        Some(m) => {
            let j = (m as f64 * rng.random::<f64>()).floor() as u32;
            let k = (m - 1).saturating_sub(j);
            let mut j = j;
            while j > 0 && level < eval(left) {
                left -= width;
                j -= 1;
            }
            let mut k = k;
            while k > 0 && level < eval(right) {
                right += width;
                k -= 1;
            }
        }
    }

    loop {
        let x1 = left + rng.random::<f64>() * (right - left);
        let lf = eval(x1);
        if level < lf {
            return SliceDraw {
                value: x1,
                log_density: lf,
                evaluations,
            };
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
    }
}

/// Slice update for a target that is uniform on the set where `inside` holds.
/// Every level of such a target cuts the same slice, so no level is drawn and
/// the update is stepping out plus shrinkage on `inside`.
///
/// `inside(x0)` must hold.
pub fn slice_update_indicator<R, F>(x0: f64, mut inside: F, width: f64, rng: &mut R) -> SliceDraw
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> bool,
{
    let mut evaluations = 0u32;
    let mut eval = |x: f64| {
        evaluations += 1;
        inside(x)
    };
    let mut left = x0 - width * rng.random::<f64>();
    let mut right = left + width;
    while eval(left) {
        left -= width;
    }
    while eval(right) {
        right += width;
    }
    loop {
        let x1 = left + rng.random::<f64>() * (right - left);
        if eval(x1) {
            return SliceDraw {
                value: x1,
                log_density: 0.0,
                evaluations,
            };
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn samples_a_truncated_uniform() {
        // Density 1 on (0.2, 0.3) U (0.4, 0.7); the two pieces carry mass 1/4 and 3/4.
        // The gap is narrower than the width, so stepping out can cross it.
        let log_f = |x: f64| {
            if (x > 0.2 && x < 0.3) || (x > 0.4 && x < 0.7) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut x = 0.25;
        let n = 200_000;
        let mut upper = 0usize;
        let mut sum = 0.0;
        for _ in 0..n {
            x = slice_update(x, 0.0, log_f, 0.25, None, &mut rng).value;
            assert!(log_f(x) == 0.0);
            upper += (x > 0.35) as usize;
            sum += x;
        }
        let frac = upper as f64 / n as f64;
        assert!((frac - 0.75).abs() < 0.02, "upper-piece fraction {frac}");
        let mean = sum / n as f64;
        let exact = 0.25 * 0.25 + 0.75 * 0.55;
        assert!((mean - exact).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn indicator_update_samples_a_truncated_uniform() {
        let inside = |x: f64| (x > 0.2 && x < 0.3) || (x > 0.4 && x < 0.7);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut x = 0.25;
        let n = 200_000;
        let mut upper = 0usize;
        for _ in 0..n {
            x = slice_update_indicator(x, inside, 0.25, &mut rng).value;
            assert!(inside(x));
            upper += (x > 0.35) as usize;
        }
        let frac = upper as f64 / n as f64;
        assert!((frac - 0.75).abs() < 0.02, "upper-piece fraction {frac}");
    }

    #[test]
    fn limited_stepping_out_still_returns_valid_points() {
        let log_f = |x: f64| -0.5 * x * x;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut x = 0.0;
        let mut s2 = 0.0;
        let n = 100_000;
        for _ in 0..n {
            x = slice_update(x, log_f(x), log_f, 0.5, Some(4), &mut rng).value;
            s2 += x * x;
        }
        assert!((s2 / n as f64 - 1.0).abs() < 0.05);
    }
}
