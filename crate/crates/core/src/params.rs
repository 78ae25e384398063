//! The full parameter vector and which of its components are inferred.

use serde::{Deserialize, Serialize};

use crate::archive::ArchiveParams;
use crate::climate::DynamicsParams;
use crate::error::{Error, Result};
use crate::forcing::ForcingWeights;
use crate::observation::CalibrationParams;

pub const N_PARAMS: usize = 17;

pub const PARAM_NAMES: [&str; N_PARAMS] = [
    "beta0",
    "beta1",
    "beta2",
    "delta",
    "alpha",
    "sigma1",
    "sigma2",
    "gamma_p",
    "gamma_c",
    "gamma_e",
    "d18o_offset",
    "d18o_scale",
    "sigma_y",
    "mu_s",
    "sigma_s",
    "compaction",
    "phi0",
];

pub const GAMMA_INDICES: [usize; 3] = [7, 8, 9];
pub const ARCHIVE_INDICES: [usize; 4] = [13, 14, 15, 16];

/// Closed interval each component must lie in; open ends are enforced by
/// [`ModelParams::validate`].
pub const PARAM_DOMAINS: [(f64, f64); N_PARAMS] = {
    const R: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);
    const POS: (f64, f64) = (0.0, f64::INFINITY);
    [R, R, R, R, R, POS, POS, R, R, R, R, R, POS, POS, POS, POS, (0.0, 1.0)]
};

pub fn param_index(name: &str) -> Option<usize> {
    PARAM_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dynamics: DynamicsParams,
    pub weights: ForcingWeights,
    pub calib: CalibrationParams,
    pub archive: ArchiveParams,
}

impl ModelParams {
    pub fn to_array(&self) -> [f64; N_PARAMS] {
        let d = &self.dynamics;
        let w = &self.weights;
        let c = &self.calib;
        let a = &self.archive;
        [
            d.beta0, d.beta1, d.beta2, d.delta, d.alpha, d.sigma1, d.sigma2, w.gamma_p, w.gamma_c, w.gamma_e, c.d,
            c.c, c.sigma_y, a.mu_s, a.sigma_s, a.c, a.phi0,
        ]
    }

    pub fn from_array(v: &[f64; N_PARAMS]) -> Self {
        Self {
            dynamics: DynamicsParams {
                beta0: v[0],
                beta1: v[1],
                beta2: v[2],
                delta: v[3],
                alpha: v[4],
                sigma1: v[5],
                sigma2: v[6],
            },
            weights: ForcingWeights::new(v[7], v[8], v[9]),
            calib: CalibrationParams { d: v[10], c: v[11], sigma_y: v[12] },
            archive: ArchiveParams { mu_s: v[13], sigma_s: v[14], c: v[15], phi0: v[16] },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dynamics.validate()?;
        if !(self.weights.gamma_p.is_finite() && self.weights.gamma_c.is_finite() && self.weights.gamma_e.is_finite()) {
            return Err(Error::Parameter("forcing weights must be finite".into()));
        }
        self.calib.validate()?;
        self.archive.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    #[default]
    Forced,
    /// γ pinned to zero and removed from the parameter vector.
    Unforced,
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forced" => Ok(ModelVariant::Forced),
            "unforced" => Ok(ModelVariant::Unforced),
            other => Err(Error::Config(format!("unknown model variant `{other}` (expected forced or unforced)"))),
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelVariant::Forced => "forced",
            ModelVariant::Unforced => "unforced",
        })
    }
}

/// Which components are sampled; the rest are held at `pinned` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub active: Vec<usize>,
    pub pinned: [f64; N_PARAMS],
}

impl ParamLayout {
    /// `fixed_chronology` removes the archive parameters, which then play no
    /// role in the likelihood.
    pub fn new(variant: ModelVariant, fixed_chronology: bool, pinned: [f64; N_PARAMS]) -> Self {
        let mut pinned = pinned;
        let active = (0..N_PARAMS)
            .filter(|i| {
                let gamma = GAMMA_INDICES.contains(i) && variant == ModelVariant::Unforced;
                let archive = ARCHIVE_INDICES.contains(i) && fixed_chronology;
                !(gamma || archive)
            })
            .collect();
        if variant == ModelVariant::Unforced {
            for i in GAMMA_INDICES {
                pinned[i] = 0.0;
            }
        }
        Self { active, pinned }
    }

    pub fn dim(&self) -> usize {
        self.active.len()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.active.iter().map(|&i| PARAM_NAMES[i]).collect()
    }

    pub fn expand(&self, active_values: &[f64]) -> ModelParams {
        debug_assert_eq!(active_values.len(), self.active.len());
        let mut full = self.pinned;
        for (&i, &v) in self.active.iter().zip(active_values) {
            full[i] = v;
        }
        ModelParams::from_array(&full)
    }

    pub fn project(&self, params: &ModelParams) -> Vec<f64> {
        let full = params.to_array();
        self.active.iter().map(|&i| full[i]).collect()
    }
}

/// Number of unknowns in the joint posterior: three latent values per slice
/// (two climate states and an age) plus the model parameters.
pub fn inference_dimension(slices: usize) -> usize {
    3 * slices + N_PARAMS
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelParams {
        ModelParams::from_array(&std::array::from_fn(|i| 0.01 * (i + 1) as f64))
    }

    #[test]
    fn seventeen_parameters_round_trip() {
        assert_eq!(PARAM_NAMES.len(), 17);
        let p = sample();
        assert_eq!(ModelParams::from_array(&p.to_array()), p);
        assert_eq!(p.to_array()[param_index("phi0").unwrap()], 0.17);
        assert_eq!(p.weights.gamma_c, 0.09);
        assert_eq!(inference_dimension(321), 980);
    }

    #[test]
    fn layouts_drop_the_right_components() {
        let p = sample();
        let forced = ParamLayout::new(ModelVariant::Forced, false, p.to_array());
        assert_eq!(forced.dim(), 17);
        let unforced = ParamLayout::new(ModelVariant::Unforced, false, p.to_array());
        assert_eq!(unforced.dim(), 14);
        assert!(!unforced.names().contains(&"gamma_p"));
        let expanded = unforced.expand(&unforced.project(&p));
        assert!(expanded.weights.is_zero());
        assert_eq!(expanded.dynamics, p.dynamics);
        let fixed = ParamLayout::new(ModelVariant::Unforced, true, p.to_array());
        assert_eq!(fixed.dim(), 10);
        assert!(!fixed.names().contains(&"mu_s"));
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("unforced".parse::<ModelVariant>().unwrap(), ModelVariant::Unforced);
        assert!("both".parse::<ModelVariant>().is_err());
        assert_eq!(ModelVariant::Forced.to_string(), "forced");
    }
}
