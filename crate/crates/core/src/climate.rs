//! Two-variable stochastic ice-volume oscillator and its Euler–Maruyama
//! integration.
//!
//! ```text
//! dX1 = -(β0 + β1 X1 + β2 (X1³ - X1) + δ X2 + F(t; γ)) dt + σ1 dW1
//! dX2 = α δ (X1 + X2 - X2³/3) dt + σ2 dW2
//! ```

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::{ForcingGrid, ForcingWeights};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
    pub alpha: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.beta0, self.beta1, self.beta2, self.delta, self.alpha, self.sigma1, self.sigma2,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("dynamics parameters must be finite".into()));
        }
        if self.sigma1 < 0.0 || self.sigma2 < 0.0 {
            return Err(Error::Parameter(format!(
                "diffusion scales must be non-negative, got sigma1={}, sigma2={}",
                self.sigma1, self.sigma2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClimateState {
    pub x1: f64,
    pub x2: f64,
    /// kyr, present = 0
    pub t: f64,
}

impl ClimateState {
    pub fn new(x1: f64, x2: f64, t: f64) -> Self {
        Self { x1, x2, t }
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite() && self.t.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// kyr
    pub max_step: f64,
    pub scheme: Scheme,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { max_step: 0.2, scheme: Scheme::EulerMaruyama }
    }
}

impl IntegratorConfig {
    pub fn new(max_step: f64) -> Result<Self> {
        let cfg = Self { max_step, scheme: Scheme::EulerMaruyama };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_step > 0.0 && self.max_step.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("max_step must be positive, got {}", self.max_step)))
        }
    }

    /// Number of equal substeps covering an interval of length `span`.
    #[inline]
    pub fn substeps(&self, span: f64) -> usize {
        ((span / self.max_step - 1e-9).ceil() as usize).max(1)
    }
}

#[inline]
pub fn drift(x1: f64, x2: f64, p: &DynamicsParams, forcing: f64) -> (f64, f64) {
    let dx1 = -(p.beta0 + p.beta1 * x1 + p.beta2 * (x1 * x1 * x1 - x1) + p.delta * x2 + forcing);
    let dx2 = p.alpha * p.delta * (x1 + x2 - x2 * x2 * x2 / 3.0);
    (dx1, dx2)
}

/// Advances `state` to `t_end` with equal Euler–Maruyama substeps no longer
/// than `config.max_step`. Forcing is taken at the left end of each substep.
/// Normal variates are drawn only for components with non-zero diffusion, so
/// a noise-free model consumes no randomness.
pub fn integrate<R: Rng + ?Sized>(
    state: ClimateState,
    t_end: f64,
    params: &DynamicsParams,
    weights: &ForcingWeights,
    grid: &ForcingGrid,
    config: &IntegratorConfig,
    rng: &mut R,
) -> Result<ClimateState> {
    if !(t_end >= state.t) {
        return Err(Error::Ordering(format!(
            "integration end {t_end} kyr precedes the current time {} kyr",
            state.t
        )));
    }
    if t_end == state.t {
        return Ok(state);
    }
    let span = t_end - state.t;
    let n = config.substeps(span);
    let h = span / n as f64;
    let sqrt_h = h.sqrt();
    let unforced = weights.is_zero();
    let (mut x1, mut x2) = (state.x1, state.x2);
    for k in 0..n {
        let t = state.t + k as f64 * h;
        let f = if unforced {
            // Still enforce the validity window.
            grid.components(t).map(|_| 0.0)
        } else {
            grid.eval(t, weights)
        }
        .ok_or_else(|| {
            let (start, end) = grid.window();
            Error::Domain { t, start, end }
        })?;
        let (d1, d2) = drift(x1, x2, params, f);
        x1 += d1 * h;
        x2 += d2 * h;
        if params.sigma1 > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            x1 += params.sigma1 * sqrt_h * z;
        }
        if params.sigma2 > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            x2 += params.sigma2 * sqrt_h * z;
        }
    }
    Ok(ClimateState { x1, x2, t: t_end })
}
