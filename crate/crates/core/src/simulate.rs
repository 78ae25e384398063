//! Synthetic cores drawn from the full forward model.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::archive::{compact_correct, sample_ig, Chronology};
use crate::climate::{integrate, ClimateState, IntegratorConfig};
use crate::error::{Error, Result};
use crate::forcing::OrbitalForcing;
use crate::io::fmt_f64;
use crate::observation::{CoreRecord, Slice, TiePoint};
use crate::params::ModelParams;
use crate::rng::{Purpose, Streams};
use crate::smc::InitialStateDist;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub true_params: ModelParams,
    /// m
    pub core_length: f64,
    /// m
    pub slice_spacing: f64,
    /// Depth of the shallowest slice; defaults to one spacing below the
    /// sediment surface.
    pub top_depth: Option<f64>,
    /// kyr
    pub tiepoint_sd: f64,
    pub seed: u64,
    pub integrator: IntegratorConfig,
    pub initial_state: InitialStateDist,
}

impl SimulationConfig {
    pub fn slices(&self) -> usize {
        (self.core_length / self.slice_spacing).round() as usize + 1
    }

    pub fn depths(&self) -> Vec<f64> {
        let m = self.slices();
        let top = self.top_depth.unwrap_or(self.slice_spacing);
        // Rounded to 1 nm so depths print as typed rather than as float noise.
        (0..m).map(|k| ((top + (m - 1 - k) as f64 * self.slice_spacing) * 1e9).round() / 1e9).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.core_length > 0.0 && self.core_length.is_finite()) {
            return Err(Error::Config(format!("core_length must be positive, got {}", self.core_length)));
        }
        if !(self.slice_spacing > 0.0 && self.slice_spacing.is_finite()) {
            return Err(Error::Config(format!("slice_spacing must be positive, got {}", self.slice_spacing)));
        }
        if let Some(top) = self.top_depth {
            if !(top > 0.0) {
                return Err(Error::Config(format!("top_depth must be positive, got {top}")));
            }
        }
        if !(self.tiepoint_sd > 0.0) {
            return Err(Error::Config(format!("tiepoint_sd must be positive, got {}", self.tiepoint_sd)));
        }
        let p = &self.true_params;
        p.dynamics.validate()?;
        p.archive.validate()?;
        if !(p.calib.sigma_y >= 0.0 && p.calib.d.is_finite() && p.calib.c.is_finite()) {
            return Err(Error::Config("calibration must be finite with sigma_y >= 0".into()));
        }
        self.integrator.validate()?;
        self.initial_state.validate()
    }
}

/// What the simulator drew, slice by slice (deepest first).
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTruth {
    pub params: ModelParams,
    pub depths: Vec<f64>,
    pub chronology: Chronology,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// Noise-free δ¹⁸O, `D + C x1`.
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl SimulationTruth {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slice,depth_m,T_kyr,x1,x2,z,y\n");
        for m in 0..self.depths.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                m + 1,
                fmt_f64(self.depths[m]),
                fmt_f64(self.chronology.times[m]),
                fmt_f64(self.x1[m]),
                fmt_f64(self.x2[m]),
                fmt_f64(self.z[m]),
                fmt_f64(self.y[m])
            )
            .unwrap();
        }
        out
    }
}

/// Samples a chronology downward from the present, integrates the climate
/// forward from the oldest slice, and adds measurement noise. The deepest
/// slice carries a tie point whose mean is the true age plus Gaussian noise.
pub fn simulate_core(cfg: &SimulationConfig, forcing: &OrbitalForcing) -> Result<(CoreRecord, SimulationTruth)> {
    cfg.validate()?;
    let p = &cfg.true_params;
    let depths = cfg.depths();
    let m_total = depths.len();
    let hc = depths.iter().map(|&h| compact_correct(h, &p.archive)).collect::<Result<Vec<_>>>()?;
    let streams = Streams::new(cfg.seed);

    let mut rng = streams.get(Purpose::Simulation, 0, 0, 0);
    let mut times = vec![0.0; m_total];
    let (a, b) = p.archive.passage(hc[m_total - 1]);
    times[m_total - 1] = -sample_ig(a, b, &mut rng)?;
    for m in (0..m_total - 1).rev() {
        let (a, b) = p.archive.passage(hc[m] - hc[m + 1]);
        times[m] = times[m + 1] - sample_ig(a, b, &mut rng)?;
    }
    let (lo, _) = forcing.grid().window();
    if times[0] < lo {
        return Err(Error::Config(format!(
            "simulated age of the deepest slice ({:.1} kyr) is older than the forcing window starts ({lo} kyr); \
             shorten the core or raise mu_s",
            -times[0]
        )));
    }
    let chronology = Chronology::new(times)?;

    let mut rng = streams.get(Purpose::Simulation, 0, 1, 0);
    let init = &cfg.initial_state;
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let mut state = ClimateState::new(
        init.x1_mean + init.x1_sd * z1,
        init.x2_mean + init.x2_sd * z2,
        chronology.times[0],
    );
    let mut x1 = vec![state.x1];
    let mut x2 = vec![state.x2];
    for m in 1..m_total {
        state = integrate(state, chronology.times[m], &p.dynamics, &p.weights, forcing.grid(), &cfg.integrator, &mut rng)?;
        if !state.is_finite() {
            return Err(Error::Config("climate state diverged; check the dynamics parameters".into()));
        }
        x1.push(state.x1);
        x2.push(state.x2);
    }

    let mut rng = streams.get(Purpose::Simulation, 0, 2, 0);
    let z: Vec<f64> = x1.iter().map(|&v| p.calib.mean(v)).collect();
    let y: Vec<f64> = z
        .iter()
        .map(|&zm| {
            let e: f64 = rng.sample(StandardNormal);
            zm + p.calib.sigma_y * e
        })
        .collect();

    let mut rng = streams.get(Purpose::Simulation, 0, 3, 0);
    let e: f64 = rng.sample(StandardNormal);
    let tie = TiePoint { slice: 0, age_mean: -chronology.times[0] + cfg.tiepoint_sd * e, age_sd: cfg.tiepoint_sd };
    let slices = depths.iter().zip(&y).map(|(&d, &v)| Slice { depth_m: d, d18o: v }).collect();
    let record = CoreRecord::new(format!("synthetic-{}", cfg.seed), slices, vec![tie])?;
    let truth = SimulationTruth { params: *p, depths, chronology, x1, x2, z, y };
    Ok((record, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::ArchiveParams;
    use crate::climate::DynamicsParams;
    use crate::forcing::ForcingWeights;
    use crate::observation::CalibrationParams;
    use crate::params::inference_dimension;

    fn truth_params() -> ModelParams {
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

    fn config() -> SimulationConfig {
        SimulationConfig {
            true_params: truth_params(),
            core_length: 32.0,
            slice_spacing: 0.1,
            top_depth: None,
            tiepoint_sd: 2.0,
            seed: 7,
            integrator: IntegratorConfig::default(),
            initial_state: InitialStateDist::default(),
        }
    }

    #[test]
    fn full_scale_core_has_321_slices() {
        let f = OrbitalForcing::default_berger(0.2).unwrap();
        let (record, truth) = simulate_core(&config(), &f).unwrap();
        assert_eq!(record.len(), 321);
        assert_eq!(inference_dimension(record.len()), 980);
        truth.chronology.validate().unwrap();
        assert_eq!(record.tie_points.len(), 1);
        assert_eq!(record.tie_points[0].slice, 0);
        assert!((record.depths()[0] - 32.1).abs() < 1e-9);
        let reparsed = crate::observation::parse_core(
            &record.to_csv(),
            std::path::Path::new("x"),
            "x",
            &crate::observation::LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(reparsed, record);
        assert_eq!(truth.to_csv().lines().count(), 322);
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let f = OrbitalForcing::default_berger(0.2).unwrap();
        let mut cfg = config();
        cfg.core_length = 3.0;
        let (a, ta) = simulate_core(&cfg, &f).unwrap();
        let (b, tb) = simulate_core(&cfg, &f).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(ta.to_csv(), tb.to_csv());
        cfg.seed += 1;
        let (c, _) = simulate_core(&cfg, &f).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn noise_free_limit() {
        let f = OrbitalForcing::default_berger(0.2).unwrap();
        let mut cfg = config();
        cfg.core_length = 5.0;
        cfg.true_params.archive = ArchiveParams { mu_s: 0.05, sigma_s: 1e-9, c: 0.0, phi0: 0.6 };
        cfg.true_params.dynamics.sigma1 = 0.0;
        cfg.true_params.dynamics.sigma2 = 0.0;
        cfg.true_params.calib.sigma_y = 0.0;
        let (record, truth) = simulate_core(&cfg, &f).unwrap();
        for w in truth.chronology.times.windows(2) {
            assert!((w[1] - w[0] - 0.1 / 0.05).abs() < 1e-6);
        }
        assert_eq!(record.observations(), truth.z);
        for m in 0..record.len() {
            assert_eq!(truth.z[m], 4.0 + 0.8 * truth.x1[m]);
        }
    }

    #[test]
    fn rejects_cores_older_than_the_forcing_window() {
        let f = OrbitalForcing::default_berger(0.2).unwrap();
        let mut cfg = config();
        cfg.true_params.archive.mu_s = 0.01;
        assert!(matches!(simulate_core(&cfg, &f), Err(Error::Config(_))));
        cfg.slice_spacing = 0.0;
        assert!(simulate_core(&cfg, &f).is_err());
    }
}
