//! Sequential Monte Carlo inference: the inner particle filter over
//! `(X1, X2, T)` for a fixed parameter vector and the outer SMC² loop over
//! parameters.

mod filter;
mod resample;
mod smc2;

pub use filter::{pf_init, pf_step, ParticleFilter, SamplePath, ThetaModel};
pub use resample::{ess, ess_log, log_sum_exp, normalize_log_weights, systematic_resample, systematic_resample_log};
pub use smc2::{
    chronology_hash, fixed_chronology_run, smc2_run, EvidenceEstimate, PosteriorPath, ProgressRecord, RunOutput, Smc2, Smc2Config,
    ThetaParticle,
};

use serde::{Deserialize, Serialize};

use crate::archive::{Chronology, DEFAULT_RETRY_CAP};
use crate::climate::IntegratorConfig;
use crate::error::{Error, Result};
use crate::forcing::OrbitalForcing;
use crate::observation::CoreRecord;

/// Independent Gaussians for `(x1, x2)` at the first (oldest) slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialStateDist {
    pub x1_mean: f64,
    pub x1_sd: f64,
    pub x2_mean: f64,
    pub x2_sd: f64,
}

impl Default for InitialStateDist {
    fn default() -> Self {
        Self { x1_mean: 0.0, x1_sd: 1.0, x2_mean: 0.0, x2_sd: 1.0 }
    }
}

impl InitialStateDist {
    pub fn validate(&self) -> Result<()> {
        let ok = self.x1_mean.is_finite()
            && self.x2_mean.is_finite()
            && self.x1_sd >= 0.0
            && self.x2_sd >= 0.0
            && self.x1_sd.is_finite()
            && self.x2_sd.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid initial-state distribution {self:?}")))
        }
    }
}

/// How observation ages enter the model.
#[derive(Debug, Clone, PartialEq)]
pub enum AgeModel {
    /// Ages are latent and inferred jointly.
    Joint,
    /// Ages are clamped to a supplied chronology; archive parameters and
    /// tie points play no role.
    Fixed(Chronology),
}

/// Everything a likelihood evaluation needs besides the parameters.
#[derive(Debug, Clone)]
pub struct ModelContext {
    pub record: CoreRecord,
    pub forcing: OrbitalForcing,
    pub integrator: IntegratorConfig,
    pub initial_state: InitialStateDist,
    pub ages: AgeModel,
    pub retry_cap: usize,
    pub(crate) y: Vec<f64>,
    pub(crate) depths: Vec<f64>,
    pub(crate) tie: Vec<Option<(f64, f64)>>,
}

impl ModelContext {
    pub fn new(
        record: CoreRecord,
        forcing: OrbitalForcing,
        integrator: IntegratorConfig,
        initial_state: InitialStateDist,
        ages: AgeModel,
    ) -> Result<Self> {
        record.validate()?;
        integrator.validate()?;
        initial_state.validate()?;
        if let AgeModel::Fixed(ch) = &ages {
            ch.validate()?;
            if ch.len() != record.len() {
                return Err(Error::Config(format!(
                    "fixed chronology has {} ages but the core has {} slices",
                    ch.len(),
                    record.len()
                )));
            }
            let (lo, hi) = forcing.grid().window();
            if ch.times[0] < lo || *ch.times.last().unwrap() > hi {
                return Err(Error::Config("fixed chronology leaves the forcing window".into()));
            }
        }
        let y = record.observations();
        let depths = record.depths();
        let mut tie = vec![None; record.len()];
        for tp in &record.tie_points {
            tie[tp.slice] = Some((tp.age_mean, tp.age_sd));
        }
        Ok(Self { record, forcing, integrator, initial_state, ages, retry_cap: DEFAULT_RETRY_CAP, y, depths, tie })
    }

    pub fn with_retry_cap(mut self, retry_cap: usize) -> Self {
        self.retry_cap = retry_cap.max(1);
        self
    }

    pub fn slices(&self) -> usize {
        self.y.len()
    }

    pub fn fixed_chronology(&self) -> bool {
        matches!(self.ages, AgeModel::Fixed(_))
    }
}
