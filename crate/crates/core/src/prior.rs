//! Prior distributions and the maps to unconstrained space used by the
//! rejuvenation moves.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::archive::ln_normal_cdf;
use crate::error::{Error, Result};
use crate::params::{ParamLayout, N_PARAMS, PARAM_DOMAINS, PARAM_NAMES};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorDist {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, sd: f64 },
    /// `ln x ~ N(mean, sd²)`
    LogGaussian { mean: f64, sd: f64 },
    TruncatedGaussian { mean: f64, sd: f64, lo: f64, hi: f64 },
}

/// Bijection between a parameter's support and the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    /// `x = lo + e^u`
    Log { lo: f64 },
    /// `x = hi - e^u`
    NegLog { hi: f64 },
    /// `x = lo + (hi - lo) / (1 + e^-u)`
    Logit { lo: f64, hi: f64 },
}

#[inline]
fn ln_sigmoid(u: f64) -> f64 {
    // -ln(1 + e^-u), stable for both signs
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

impl Transform {
    pub fn to_unconstrained(&self, x: f64) -> f64 {
        match *self {
            Transform::Identity => x,
            Transform::Log { lo } => (x - lo).ln(),
            Transform::NegLog { hi } => (hi - x).ln(),
            Transform::Logit { lo, hi } => {
                let p = (x - lo) / (hi - lo);
                p.ln() - (-p).ln_1p()
            }
        }
    }

    pub fn from_unconstrained(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => u,
            Transform::Log { lo } => lo + u.exp(),
            Transform::NegLog { hi } => hi - u.exp(),
            Transform::Logit { lo, hi } => lo + (hi - lo) * ln_sigmoid(u).exp(),
        }
    }

    /// `ln |dx/du|`
    pub fn ln_jacobian(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => 0.0,
            Transform::Log { .. } | Transform::NegLog { .. } => u,
            Transform::Logit { lo, hi } => (hi - lo).ln() + ln_sigmoid(u) + ln_sigmoid(-u),
        }
    }
}

impl PriorDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PriorDist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            PriorDist::Gaussian { mean, sd } | PriorDist::LogGaussian { mean, sd } => {
                mean.is_finite() && sd > 0.0 && sd.is_finite()
            }
            PriorDist::TruncatedGaussian { mean, sd, lo, hi } => {
                mean.is_finite() && sd > 0.0 && sd.is_finite() && lo < hi && !lo.is_nan() && !hi.is_nan()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("improper prior {self:?}")))
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            PriorDist::Uniform { lo, hi } | PriorDist::TruncatedGaussian { lo, hi, .. } => (lo, hi),
            PriorDist::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            PriorDist::LogGaussian { .. } => (0.0, f64::INFINITY),
        }
    }

    pub fn transform(&self) -> Transform {
        match self.support() {
            (lo, hi) if lo.is_finite() && hi.is_finite() => Transform::Logit { lo, hi },
            (lo, _) if lo.is_finite() => Transform::Log { lo },
            (_, hi) if hi.is_finite() => Transform::NegLog { hi },
            _ => Transform::Identity,
        }
    }

    /// `ln(Φ(b) - Φ(a))` for the standardised bounds, evaluated in whichever
    /// tail keeps it accurate.
    fn truncation_mass(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
        let (a, b) = ((lo - mean) / sd, (hi - mean) / sd);
        let (big, small) = if a > 0.0 {
            (ln_normal_cdf(-a), ln_normal_cdf(-b))
        } else {
            (ln_normal_cdf(b), ln_normal_cdf(a))
        };
        big + (-(small - big).exp()).ln_1p()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(x > lo && x < hi) {
            return f64::NEG_INFINITY;
        }
        match *self {
            PriorDist::Uniform { lo, hi } => -(hi - lo).ln(),
            PriorDist::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI
            }
            PriorDist::LogGaussian { mean, sd } => {
                let z = (x.ln() - mean) / sd;
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI - x.ln()
            }
            PriorDist::TruncatedGaussian { mean, sd, lo, hi } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI - Self::truncation_mass(mean, sd, lo, hi)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PriorDist::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                lo + (hi - lo) * u
            }
            PriorDist::Gaussian { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            PriorDist::LogGaussian { mean, sd } => (mean + sd * rng.sample::<f64, _>(StandardNormal)).exp(),
            PriorDist::TruncatedGaussian { mean, sd, lo, hi } => {
                let n = Normal::standard();
                let (a, b) = (n.cdf((lo - mean) / sd), n.cdf((hi - mean) / sd));
                if b - a > 1e-3 {
                    loop {
                        let u: f64 = rng.random();
                        let x = mean + sd * n.inverse_cdf(a + (b - a) * u);
                        if x > lo && x < hi {
                            return x;
                        }
                    }
                } else {
                    // Far-tail window: uniform proposal with rejection.
                    let (l, h) = (lo.max(mean - 40.0 * sd), hi.min(mean + 40.0 * sd));
                    let peak = if mean < l { l } else if mean > h { h } else { mean };
                    loop {
                        let u: f64 = rng.random();
                        let x = l + (h - l) * u;
                        let acc = (-0.5 * (((x - mean) / sd).powi(2) - ((peak - mean) / sd).powi(2))).exp();
                        if rng.random::<f64>() < acc {
                            return x;
                        }
                    }
                }
            }
        }
    }
}

/// One prior per model parameter, in [`PARAM_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub dists: [PriorDist; N_PARAMS],
    transforms: [Transform; N_PARAMS],
}

impl Prior {
    pub fn new(dists: [PriorDist; N_PARAMS]) -> Result<Self> {
        for (i, d) in dists.iter().enumerate() {
            d.validate().map_err(|_| Error::Config(format!("prior for {} is improper: {d:?}", PARAM_NAMES[i])))?;
            let (lo, hi) = d.support();
            let (dlo, dhi) = PARAM_DOMAINS[i];
            if lo < dlo || hi > dhi {
                return Err(Error::Config(format!(
                    "prior for {} has support [{lo}, {hi}] outside the admissible range [{dlo}, {dhi}]",
                    PARAM_NAMES[i]
                )));
            }
        }
        let transforms = dists.map(|d| d.transform());
        Ok(Self { dists, transforms })
    }

    pub fn dist(&self, i: usize) -> &PriorDist {
        &self.dists[i]
    }

    pub fn transform(&self, i: usize) -> Transform {
        self.transforms[i]
    }

    /// Draws the active components.
    pub fn sample_active<R: Rng + ?Sized>(&self, layout: &ParamLayout, rng: &mut R) -> Vec<f64> {
        layout.active.iter().map(|&i| self.dists[i].sample(rng)).collect()
    }

    pub fn ln_pdf_active(&self, layout: &ParamLayout, values: &[f64]) -> f64 {
        layout.active.iter().zip(values).map(|(&i, &x)| self.dists[i].ln_pdf(x)).sum()
    }

    pub fn to_unconstrained(&self, layout: &ParamLayout, values: &[f64]) -> Vec<f64> {
        layout.active.iter().zip(values).map(|(&i, &x)| self.transforms[i].to_unconstrained(x)).collect()
    }

    pub fn from_unconstrained(&self, layout: &ParamLayout, u: &[f64]) -> Vec<f64> {
        layout.active.iter().zip(u).map(|(&i, &v)| self.transforms[i].from_unconstrained(v)).collect()
    }

    /// Prior log-density of the image of `u`, including the Jacobian.
    pub fn ln_pdf_unconstrained(&self, layout: &ParamLayout, u: &[f64]) -> f64 {
        layout
            .active
            .iter()
            .zip(u)
            .map(|(&i, &v)| {
                let t = self.transforms[i];
                self.dists[i].ln_pdf(t.from_unconstrained(v)) + t.ln_jacobian(v)
            })
            .sum()
    }
}
