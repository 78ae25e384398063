//! Weight utilities shared by the inner filter and the outer loop.

use rand::Rng;

/// `ln Σ exp(x_i)`; `-∞` when every entry is `-∞` (or the slice is empty).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Shifts log-weights so they exponentiate to a probability vector and
/// returns the log of the original total. Leaves the input untouched when the
/// total is `-∞`.
pub fn normalize_log_weights(log_w: &mut [f64]) -> f64 {
    let total = log_sum_exp(log_w);
    if total.is_finite() {
        for w in log_w.iter_mut() {
            *w -= total;
        }
    }
    total
}

/// Effective sample size `1 / Σ w²` of normalised weights.
pub fn ess(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().map(|w| w * w).sum();
    if s > 0.0 {
        1.0 / s
    } else {
        0.0
    }
}

/// ESS computed from normalised log-weights.
pub fn ess_log(log_w: &[f64]) -> f64 {
    let s: f64 = log_w.iter().map(|&l| (2.0 * l).exp()).sum();
    if s > 0.0 {
        1.0 / s
    } else {
        0.0
    }
}

/// Systematic resampling with one uniform draw. Returns `n_out` ancestor
/// indices in non-decreasing order.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], n_out: usize, rng: &mut R) -> Vec<usize> {
    let u: f64 = rng.random();
    systematic_with_offset(weights, n_out, u)
}

pub(crate) fn systematic_with_offset(weights: &[f64], n_out: usize, u: f64) -> Vec<usize> {
    let mut out = Vec::with_capacity(n_out);
    let total: f64 = weights.iter().sum();
    let step = total / n_out as f64;
    let mut target = u * step;
    let mut cum = 0.0;
    let last = weights.len() - 1;
    let mut i = 0;
    for _ in 0..n_out {
        while i < last && cum + weights[i] <= target {
            cum += weights[i];
            i += 1;
        }
        // Rounding can push the last targets past the final positive weight.
        let mut pick = i;
        while weights[pick] <= 0.0 && pick > 0 {
            pick -= 1;
        }
        out.push(pick);
        target += step;
    }
    out
}

/// Systematic resampling from normalised log-weights.
pub fn systematic_resample_log<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> Vec<usize> {
    let w: Vec<f64> = log_w.iter().map(|l| l.exp()).collect();
    systematic_resample(&w, log_w.len(), rng)
}
