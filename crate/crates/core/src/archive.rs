//! Sediment archive: compaction correction, inverse-Gaussian first-passage
//! ages and the age transition law used by the particle filter.
//!
//! With sediment accumulating as Brownian motion with drift `μ_s` and
//! volatility `σ_s`, the time for an uncompacted thickness `ΔĤ` to build up is
//! inverse Gaussian with mean `ΔĤ/μ_s` and shape `ΔĤ²/σ_s²`. Ages are
//! therefore `T_m = -IG(Ĥ_m/μ_s, Ĥ_m²/σ_s²)` when anchored at the present.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Attempts allowed before a rejected age proposal marks the particle
/// degenerate.
pub const DEFAULT_RETRY_CAP: usize = 100;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchiveParams {
    /// m/kyr
    pub mu_s: f64,
    /// m/√kyr
    pub sigma_s: f64,
    /// 1/m
    pub c: f64,
    pub phi0: f64,
}

impl ArchiveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_s > 0.0 && self.mu_s.is_finite()) {
            return Err(Error::Parameter(format!("mu_s must be positive, got {}", self.mu_s)));
        }
        if !(self.sigma_s > 0.0 && self.sigma_s.is_finite()) {
            return Err(Error::Parameter(format!("sigma_s must be positive, got {}", self.sigma_s)));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::Parameter(format!("compaction gradient must be non-negative, got {}", self.c)));
        }
        if !(self.phi0 >= 0.0 && self.phi0 < 1.0) {
            return Err(Error::Parameter(format!("phi0 must lie in [0, 1), got {}", self.phi0)));
        }
        Ok(())
    }

    /// IG (mean, shape) of the time taken to accumulate thickness `dh`.
    #[inline]
    pub fn passage(&self, dh: f64) -> (f64, f64) {
        (dh / self.mu_s, dh * dh / (self.sigma_s * self.sigma_s))
    }
}

/// Uncompacted-equivalent depth `H + c/(1-φ₀) H²`.
pub fn compact_correct(h: f64, params: &ArchiveParams) -> Result<f64> {
    if !(params.phi0 < 1.0) {
        return Err(Error::Parameter(format!("phi0 must be below 1, got {}", params.phi0)));
    }
    if !(h >= 0.0) {
        return Err(Error::Parameter(format!("depth must be non-negative, got {h}")));
    }
    Ok(h + params.c / (1.0 - params.phi0) * h * h)
}

/// `ln Φ(z)` for the standard normal CDF, accurate far into the lower tail.
pub fn ln_normal_cdf(z: f64) -> f64 {
    if z > -20.0 {
        (0.5 * erfc(-z / std::f64::consts::SQRT_2)).ln()
    } else {
        // Mills-ratio asymptotic series.
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2) + 105.0 / (z2 * z2 * z2 * z2);
        -0.5 * z2 - LN_SQRT_2PI - (-z).ln() + series.ln()
    }
}

#[inline]
fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Inverse Gaussian distribution in the (mean, shape) parameterisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseGaussian {
    mean: f64,
    shape: f64,
}

impl InverseGaussian {
    pub fn new(mean: f64, shape: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite() && shape > 0.0 && shape.is_finite()) {
            return Err(Error::Parameter(format!(
                "inverse Gaussian needs positive mean and shape, got mean={mean}, shape={shape}"
            )));
        }
        Ok(Self { mean, shape })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn variance(&self) -> f64 {
        self.mean.powi(3) / self.shape
    }

    pub fn mode(&self) -> f64 {
        let r = 1.5 * self.mean / self.shape;
        self.mean * ((1.0 + r * r).sqrt() - r)
    }

    #[inline]
    pub fn ln_pdf(&self, x: f64) -> f64 {
        ig_ln_pdf(x, self.mean, self.shape)
    }

    #[inline]
    pub fn ln_cdf(&self, x: f64) -> f64 {
        ig_ln_cdf(x, self.mean, self.shape)
    }

    /// Transformation method: one chi-square(1) variate picks the two roots
    /// of the defining quadratic, one uniform selects between them.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        ig_sample(self.mean, self.shape, rng)
    }
}

#[inline]
fn ig_ln_pdf(x: f64, mean: f64, shape: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    let d = x - mean;
    0.5 * (shape / x.powi(3)).ln() - LN_SQRT_2PI - shape * d * d / (2.0 * mean * mean * x)
}

#[inline]
fn ig_ln_cdf(x: f64, mean: f64, shape: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    let r = (shape / x).sqrt();
    let a = ln_normal_cdf(r * (x / mean - 1.0));
    let b = 2.0 * shape / mean + ln_normal_cdf(-r * (x / mean + 1.0));
    ln_add_exp(a, b).min(0.0)
}

#[inline]
fn ig_sample<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let nu = z * z;
    // Smaller root written to avoid cancellation for large a.
    let a = mean * nu / (2.0 * shape);
    let x = mean / (1.0 + a + (a * a + 2.0 * a).sqrt());
    let u: f64 = rng.random();
    if u <= mean / (mean + x) {
        x
    } else {
        mean * mean / x
    }
}

/// Inverse-Gaussian log-density; `-∞` for `x ≤ 0`.
pub fn ig_logpdf(x: f64, mean: f64, shape: f64) -> Result<f64> {
    Ok(InverseGaussian::new(mean, shape)?.ln_pdf(x))
}

pub fn ig_logcdf(x: f64, mean: f64, shape: f64) -> Result<f64> {
    Ok(InverseGaussian::new(mean, shape)?.ln_cdf(x))
}

pub fn sample_ig<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> Result<f64> {
    Ok(InverseGaussian::new(mean, shape)?.sample(rng))
}

/// Log-density of the age `T` (kyr, negative) of uncompacted depth `hc`,
/// anchored at the present.
#[inline]
pub fn age_marginal_logpdf(t: f64, hc: f64, params: &ArchiveParams) -> f64 {
    let (m, s) = params.passage(hc);
    ig_ln_pdf(-t, m, s)
}

/// `ln p(T_m | T_prev)` for adjacent slices with uncompacted depths
/// `hc_prev > hc_m > 0`.
pub fn age_transition_logpdf(
    t_m: f64,
    t_prev: f64,
    hc_m: f64,
    hc_prev: f64,
    params: &ArchiveParams,
) -> Result<f64> {
    check_depths(hc_m, hc_prev)?;
    if !(t_prev < t_m && t_m < 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let (m, s) = params.passage(hc_prev - hc_m);
    Ok(ig_ln_pdf(t_m - t_prev, m, s) + age_marginal_logpdf(t_m, hc_m, params)
        - age_marginal_logpdf(t_prev, hc_prev, params))
}

fn check_depths(hc_m: f64, hc_prev: f64) -> Result<()> {
    if hc_prev > hc_m && hc_m > 0.0 {
        Ok(())
    } else {
        Err(Error::Ordering(format!(
            "slice depths must satisfy previous ({hc_prev}) > current ({hc_m}) > 0"
        )))
    }
}

/// A proposed age with the log-density of the proposal that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeProposal {
    pub t: f64,
    pub log_q: f64,
    /// `ln p(T_m | T_prev) - log_q`, computed in the simplified form.
    pub log_weight: f64,
}

/// Proposes `T_m = T_prev + τ` with `τ` the untruncated IG increment,
/// rejecting draws that reach the present. Returns `None` once `retry_cap`
/// draws have all been rejected.
pub fn propose_age<R: Rng + ?Sized>(
    t_prev: f64,
    hc_m: f64,
    hc_prev: f64,
    params: &ArchiveParams,
    retry_cap: usize,
    rng: &mut R,
) -> Result<Option<AgeProposal>> {
    check_depths(hc_m, hc_prev)?;
    let (m, s) = params.passage(hc_prev - hc_m);
    Ok(propose_from(t_prev, hc_m, hc_prev, m, s, params, retry_cap, rng))
}

/// Hot-path version of [`propose_age`] with the passage law precomputed.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn propose_from<R: Rng + ?Sized>(
    t_prev: f64,
    hc_m: f64,
    hc_prev: f64,
    inc_mean: f64,
    inc_shape: f64,
    params: &ArchiveParams,
    retry_cap: usize,
    rng: &mut R,
) -> Option<AgeProposal> {
    if !(t_prev < 0.0) {
        return None;
    }
    for _ in 0..retry_cap {
        let tau = ig_sample(inc_mean, inc_shape, rng);
        let t = t_prev + tau;
        if t < 0.0 && t > t_prev {
            let ln_trunc = ig_ln_cdf(-t_prev, inc_mean, inc_shape);
            let log_q = ig_ln_pdf(tau, inc_mean, inc_shape) - ln_trunc;
            let log_weight = age_marginal_logpdf(t, hc_m, params)
                - age_marginal_logpdf(t_prev, hc_prev, params)
                + ln_trunc;
            return Some(AgeProposal { t, log_q, log_weight });
        }
    }
    None
}

/// Observed depths (deepest first) with their uncompacted equivalents.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGrid {
    pub depths: Vec<f64>,
    pub corrected_depths: Vec<f64>,
}

impl DepthGrid {
    pub fn new(depths: &[f64], params: &ArchiveParams) -> Result<Self> {
        if depths.is_empty() {
            return Err(Error::Config("depth grid is empty".into()));
        }
        if depths.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Ordering("all depths must be positive".into()));
        }
        if depths.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Ordering("depths must be strictly decreasing with slice index".into()));
        }
        let corrected = depths.iter().map(|&h| compact_correct(h, params)).collect::<Result<Vec<_>>>()?;
        Ok(Self { depths: depths.to_vec(), corrected_depths: corrected })
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }
}

/// Observation ages `T_1 < T_2 < ... < T_M < 0`, in kyr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chronology {
    pub times: Vec<f64>,
}

impl Chronology {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        let c = Self { times };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::Ordering("chronology is empty".into()));
        }
        if !is_monotone_chronology(&self.times) {
            return Err(Error::Ordering("chronology must be strictly increasing and negative".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn is_monotone_chronology(times: &[f64]) -> bool {
    times.windows(2).all(|w| w[0] < w[1]) && times.last().is_some_and(|&t| t < 0.0) && times[0].is_finite()
}
