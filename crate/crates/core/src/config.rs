//! Run configuration: one TOML file with nested sections. Every field has a
//! default, and [`RunConfig::resolved`] fills the prior and truth tables so
//! the echoed configuration leaves nothing implicit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::archive::{ArchiveParams, DEFAULT_RETRY_CAP};
use crate::climate::{DynamicsParams, IntegratorConfig};
use crate::error::{Error, Result};
use crate::forcing::{ForcingWeights, OrbitalForcing, OrbitalSeries, OrbitalSource, TabulatedOrbital, VALIDITY_WINDOW};
use crate::observation::{CalibrationParams, CoreRecord, LoadOptions, TiePoint};
use crate::params::{param_index, ModelParams, ModelVariant, N_PARAMS, PARAM_NAMES};
use crate::prior::{Prior, PriorDist};
use crate::simulate::SimulationConfig;
use crate::smc::{AgeModel, InitialStateDist, ModelContext, Smc2Config};
use crate::summary::GridConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: ModelVariant,
    pub integrator: IntegratorConfig,
    pub initial_state: InitialStateDist,
    /// Rejection cap for the truncated age-increment proposal.
    pub retry_cap: usize,
    /// Adds an age-zero tie point with this sd (kyr) at the shallowest slice.
    pub core_top_tiepoint_sd: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: ModelVariant::Forced,
            integrator: IntegratorConfig::default(),
            initial_state: InitialStateDist::default(),
            retry_cap: DEFAULT_RETRY_CAP,
            core_top_tiepoint_sd: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingSection {
    /// Coefficient file in the shipped format; the built-in table when unset.
    pub coefficients: Option<PathBuf>,
    /// Keep only the largest `terms` entries of each series.
    pub terms: Option<usize>,
    /// Tabulated `t_kyr,prec,coprec,obliquity` file; overrides the series.
    pub table: Option<PathBuf>,
    /// kyr
    pub grid_step: f64,
    /// Window and sampling step for the normalising mean and sd.
    pub normalization_window: (f64, f64),
    pub normalization_step: f64,
}

impl Default for ForcingSection {
    fn default() -> Self {
        Self {
            coefficients: None,
            terms: None,
            table: None,
            grid_step: 0.2,
            normalization_window: VALIDITY_WINDOW,
            normalization_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarySection {
    pub hdr_mass: f64,
    pub grid: GridConfig,
    /// Chronologies drawn for the fixed-chronology ablation.
    pub ablation_draws: usize,
    /// Extra seeds run per model to estimate the Monte Carlo error of
    /// `log_Z`; 0 disables.
    pub mc_replicates: usize,
}

impl Default for SummarySection {
    fn default() -> Self {
        Self { hdr_mass: 0.95, grid: GridConfig::default(), ablation_draws: 4, mc_replicates: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    /// Core CSV for `infer` and `ablation`; the command line can override it.
    pub core: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Keep slices below the deepest tie point instead of trimming them.
    pub keep_below_deepest_tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// m
    pub core_length: f64,
    /// m
    pub slice_spacing: f64,
    pub top_depth: Option<f64>,
    /// kyr
    pub tiepoint_sd: f64,
    pub seed: u64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { core_length: 32.0, slice_spacing: 0.1, top_depth: None, tiepoint_sd: 2.0, seed: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub forcing: ForcingSection,
    /// Overrides keyed by parameter name; missing names use
    /// [`default_prior`].
    pub priors: BTreeMap<String, PriorDist>,
    pub smc: Smc2Config,
    pub summary: SummarySection,
    pub io: IoSection,
    pub simulation: SimulationSection,
    /// True parameter values for `simulate`, keyed by name; missing names use
    /// [`default_truth`].
    pub truth: BTreeMap<String, f64>,
}

/// Weakly informative defaults chosen for this implementation; positive
/// parameters are log-Gaussian, forcing weights centred on zero.
pub fn default_prior() -> [PriorDist; N_PARAMS] {
    use PriorDist::*;
    let ln = f64::ln;
    [
        Gaussian { mean: 0.0, sd: 0.05 },
        Gaussian { mean: 0.0, sd: 0.05 },
        LogGaussian { mean: ln(0.01), sd: 1.0 },
        LogGaussian { mean: ln(0.03), sd: 0.5 },
        LogGaussian { mean: ln(10.0), sd: 0.5 },
        LogGaussian { mean: ln(0.02), sd: 0.7 },
        LogGaussian { mean: ln(0.05), sd: 0.7 },
        Gaussian { mean: 0.0, sd: 0.04 },
        Gaussian { mean: 0.0, sd: 0.04 },
        Gaussian { mean: 0.0, sd: 0.04 },
        Gaussian { mean: 4.0, sd: 0.5 },
        LogGaussian { mean: 0.0, sd: 0.5 },
        LogGaussian { mean: ln(0.1), sd: 0.5 },
        LogGaussian { mean: ln(0.04), sd: 0.5 },
        LogGaussian { mean: ln(0.025), sd: 0.5 },
        Uniform { lo: 0.0, hi: 0.01 },
        Uniform { lo: 0.2, hi: 0.9 },
    ]
}

/// Placeholder truth for synthetic studies: a forced oscillator with roughly
/// glacial-cycle timescales and 5 cm/kyr accumulation.
pub fn default_truth() -> ModelParams {
    ModelParams {
        dynamics: DynamicsParams {
            beta0: 0.01,
            beta1: 0.0,
            beta2: 0.01,
            delta: 0.03,
            alpha: 10.0,
            sigma1: 0.02,
            sigma2: 0.05,
        },
        weights: ForcingWeights::new(0.03, 0.015, 0.03),
        calib: CalibrationParams { d: 4.0, c: 0.8, sigma_y: 0.08 },
        archive: ArchiveParams { mu_s: 0.05, sigma_s: 0.025, c: 0.003, phi0: 0.6 },
    }
}

/// `[truth]` table for a parameter set, readable back as a run config.
pub fn truth_toml(params: &ModelParams) -> String {
    #[derive(Serialize)]
    struct TruthFile {
        truth: BTreeMap<String, f64>,
    }
    let truth = PARAM_NAMES.iter().zip(params.to_array()).map(|(n, v)| (n.to_string(), v)).collect();
    toml::to_string(&TruthFile { truth }).expect("truth table serialises")
}

fn check_names<'a>(keys: impl Iterator<Item = &'a String>, section: &str) -> Result<()> {
    for k in keys {
        if param_index(k).is_none() {
            return Err(Error::Config(format!(
                "unknown parameter `{k}` in [{section}]; expected one of {}",
                PARAM_NAMES.join(", ")
            )));
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_names(self.priors.keys(), "priors")?;
        check_names(self.truth.keys(), "truth")?;
        self.prior()?;
        self.smc.validate()?;
        self.model.integrator.validate()?;
        self.model.initial_state.validate()?;
        if let Some(sd) = self.model.core_top_tiepoint_sd {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(Error::Config(format!("core_top_tiepoint_sd must be positive, got {sd}")));
            }
        }
        if !(self.forcing.grid_step > 0.0 && self.forcing.normalization_step > 0.0) {
            return Err(Error::Config("forcing steps must be positive".into()));
        }
        if !(self.summary.hdr_mass > 0.0 && self.summary.hdr_mass <= 1.0) {
            return Err(Error::Config(format!("hdr_mass must be in (0, 1], got {}", self.summary.hdr_mass)));
        }
        if self.summary.grid.points < 2 {
            return Err(Error::Config("HDR grid needs at least 2 points".into()));
        }
        Ok(())
    }

    /// Copy with every prior and truth entry spelled out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        let dp = default_prior();
        let dt = default_truth().to_array();
        for (i, name) in PARAM_NAMES.iter().enumerate() {
            out.priors.entry(name.to_string()).or_insert(dp[i]);
            out.truth.entry(name.to_string()).or_insert(dt[i]);
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn prior(&self) -> Result<Prior> {
        let mut dists = default_prior();
        for (name, d) in &self.priors {
            let i = param_index(name).ok_or_else(|| Error::Config(format!("unknown prior `{name}`")))?;
            dists[i] = *d;
        }
        Prior::new(dists)
    }

    pub fn true_params(&self) -> Result<ModelParams> {
        let mut v = default_truth().to_array();
        for (name, x) in &self.truth {
            let i = param_index(name).ok_or_else(|| Error::Config(format!("unknown truth entry `{name}`")))?;
            v[i] = *x;
        }
        let p = ModelParams::from_array(&v);
        p.validate().map_err(|e| Error::Config(format!("[truth]: {e}")))?;
        Ok(p)
    }

    pub fn forcing(&self) -> Result<OrbitalForcing> {
        let f = &self.forcing;
        let source = if let Some(table) = &f.table {
            OrbitalSource::Table(TabulatedOrbital::from_csv(table)?)
        } else {
            let series = match &f.coefficients {
                Some(p) => OrbitalSeries::from_file(p)?,
                None => OrbitalSeries::berger1978(None)?,
            };
            OrbitalSource::Series(match f.terms {
                Some(n) => series.truncated(n)?,
                None => series,
            })
        };
        OrbitalForcing::new(source, f.normalization_window, f.normalization_step, f.grid_step)
    }

    pub fn simulation(&self) -> Result<SimulationConfig> {
        let s = &self.simulation;
        let cfg = SimulationConfig {
            true_params: self.true_params()?,
            core_length: s.core_length,
            slice_spacing: s.slice_spacing,
            top_depth: s.top_depth,
            tiepoint_sd: s.tiepoint_sd,
            seed: s.seed,
            integrator: self.model.integrator,
            initial_state: self.model.initial_state,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions { trim_below_deepest_tie: !self.io.keep_below_deepest_tie }
    }

    /// Applies the optional core-top tie point.
    pub fn prepare_record(&self, mut record: CoreRecord) -> Result<CoreRecord> {
        if let Some(sd) = self.model.core_top_tiepoint_sd {
            let top = record.len() - 1;
            if record.tie_point(top).is_some() {
                return Err(Error::Consistency("the shallowest slice already carries a tie point".into()));
            }
            let mut ties = record.tie_points.clone();
            ties.push(TiePoint { slice: top, age_mean: 0.0, age_sd: sd });
            record = CoreRecord::new(record.name.clone(), record.slices.clone(), ties)?;
        }
        Ok(record)
    }

    pub fn context(&self, record: CoreRecord, forcing: OrbitalForcing, ages: AgeModel) -> Result<ModelContext> {
        let record = self.prepare_record(record)?;
        Ok(ModelContext::new(record, forcing, self.model.integrator, self.model.initial_state, ages)?
            .with_retry_cap(self.model.retry_cap))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.smc.n_theta, 1024);
        assert_eq!(cfg.smc.k_moves, 3);
        assert_eq!(cfg.true_params().unwrap(), default_truth());
        assert_eq!(cfg.simulation().unwrap().slices(), 321);
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [model]
            variant = "unforced"
            [priors]
            alpha = { kind = "uniform", lo = 1.0, hi = 20.0 }
            [smc]
            n_theta = 64
            n_x = 32
            [truth]
            mu_s = 0.04
            "#,
        )
        .unwrap();
        let full = cfg.resolved();
        assert_eq!(full.priors.len(), N_PARAMS);
        assert_eq!(full.truth.len(), N_PARAMS);
        let back = RunConfig::from_toml_str(&full.to_toml()).unwrap();
        assert_eq!(back, full);
        assert_eq!(back.model.variant, ModelVariant::Unforced);
        assert_eq!(*back.prior().unwrap().dist(4), PriorDist::Uniform { lo: 1.0, hi: 20.0 });
        assert_eq!(back.true_params().unwrap().archive.mu_s, 0.04);
        assert_eq!(back.prior().unwrap(), cfg.prior().unwrap());
    }

    #[test]
    fn truth_file_reads_back() {
        let mut p = default_truth();
        p.archive.sigma_s = 1e-5;
        let cfg = RunConfig::from_toml_str(&truth_toml(&p)).unwrap();
        assert_eq!(cfg.true_params().unwrap(), p);
    }

    #[test]
    fn rejects_unknown_keys_and_names() {
        assert!(matches!(RunConfig::from_toml_str("[smc]\nn_thetas = 3"), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_toml_str("[priors]\ngamma = { kind = \"gaussian\", mean = 0.0, sd = 1.0 }"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_toml_str("[priors]\nsigma1 = { kind = \"gaussian\", mean = 0.0, sd = 1.0 }"),
            Err(Error::Parameter(_) | Error::Config(_))
        ));
        assert!(RunConfig::from_toml_str("[truth]\nphi0 = 1.5").unwrap().true_params().is_err());
    }

    #[test]
    fn core_top_tie_point_is_added() {
        use crate::observation::Slice;
        let slices = (0..4).map(|k| Slice { depth_m: 0.4 - 0.1 * k as f64, d18o: 4.0 }).collect();
        let record =
            CoreRecord::new("x", slices, vec![TiePoint { slice: 0, age_mean: 10.0, age_sd: 1.0 }]).unwrap();
        let cfg = RunConfig::from_toml_str("[model]\ncore_top_tiepoint_sd = 0.5").unwrap();
        let r = cfg.prepare_record(record).unwrap();
        assert_eq!(r.tie_point(3).unwrap().age_sd, 0.5);
        assert_eq!(r.tie_points.len(), 2);
    }
}
