//! Shared oracles and fixtures for the integration tests and the acceptance
//! runner.
#![allow(dead_code)]

use paleojoint_core::archive::{ArchiveParams, Chronology};
use paleojoint_core::climate::{integrate, ClimateState, DynamicsParams, IntegratorConfig};
use paleojoint_core::config::{default_prior, default_truth};
use paleojoint_core::forcing::{ForcingWeights, OrbitalForcing};
use paleojoint_core::observation::{CalibrationParams, CoreRecord, Slice, TiePoint};
use paleojoint_core::params::ModelParams;
use paleojoint_core::prior::Prior;
use paleojoint_core::rng::{Purpose, Streams};
use paleojoint_core::simulate::{simulate_core, SimulationConfig, SimulationTruth};
use paleojoint_core::smc::{AgeModel, InitialStateDist, ModelContext};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn forcing() -> OrbitalForcing {
    OrbitalForcing::default_berger(0.2).unwrap()
}

pub fn prior() -> Prior {
    Prior::new(default_prior()).unwrap()
}

/// Desk-scale synthetic study: 5.9 m at 0.1 m spacing, 60 slices.
pub fn desk_simulation(seed: u64, forced: bool) -> SimulationConfig {
    let mut truth = default_truth();
    if !forced {
        truth.weights = ForcingWeights::ZERO;
    }
    SimulationConfig {
        true_params: truth,
        core_length: 5.9,
        slice_spacing: 0.1,
        top_depth: None,
        tiepoint_sd: 2.0,
        seed,
        integrator: IntegratorConfig::default(),
        initial_state: InitialStateDist::default(),
    }
}

pub fn desk_core(seed: u64, forced: bool, forcing: &OrbitalForcing) -> (ModelContext, SimulationTruth) {
    let (record, truth) = simulate_core(&desk_simulation(seed, forced), forcing).unwrap();
    let ctx = ModelContext::new(
        record,
        forcing.clone(),
        IntegratorConfig::default(),
        InitialStateDist::default(),
        AgeModel::Joint,
    )
    .unwrap();
    (ctx, truth)
}

/// Linear-Gaussian surrogate: with β₂ = δ = α = 0 and no forcing, x1 is an
/// Ornstein–Uhlenbeck process observed through `D + C x1` plus noise.
pub fn surrogate_params() -> ModelParams {
    ModelParams {
        dynamics: DynamicsParams {
            beta0: 0.02,
            beta1: 0.05,
            beta2: 0.0,
            delta: 0.0,
            alpha: 0.0,
            sigma1: 0.15,
            sigma2: 0.05,
        },
        weights: ForcingWeights::ZERO,
        calib: CalibrationParams { d: 4.0, c: 0.8, sigma_y: 0.1 },
        archive: ArchiveParams { mu_s: 0.05, sigma_s: 0.025, c: 0.0, phi0: 0.5 },
    }
}

/// Surrogate record with irregular fixed ages, simulated with the package
/// integrator so the data follow the discretised model exactly.
pub fn surrogate_context(m: usize, seed: u64, forcing: &OrbitalForcing) -> (ModelContext, ModelParams) {
    let p = surrogate_params();
    let init = InitialStateDist { x1_mean: 0.3, x1_sd: 0.5, x2_mean: 0.0, x2_sd: 1.0 };
    let cfg = IntegratorConfig::default();
    let mut rng = Streams::new(seed).get(Purpose::Test, 0, 0, 0);
    let mut times = vec![-200.0];
    for _ in 1..m {
        let gap = 0.7 + 2.6 * rng.random::<f64>();
        times.push(times.last().unwrap() + gap);
    }
    let z: f64 = rng.sample(StandardNormal);
    let mut state = ClimateState::new(init.x1_mean + init.x1_sd * z, 0.0, times[0]);
    let mut y = Vec::with_capacity(m);
    for (k, &t) in times.iter().enumerate() {
        if k > 0 {
            state = integrate(state, t, &p.dynamics, &p.weights, forcing.grid(), &cfg, &mut rng).unwrap();
        }
        let e: f64 = rng.sample(StandardNormal);
        y.push(p.calib.mean(state.x1) + p.calib.sigma_y * e);
    }
    let slices = (0..m).map(|k| Slice { depth_m: 0.1 * (m - k) as f64, d18o: y[k] }).collect();
    let record = CoreRecord::new(
        "surrogate",
        slices,
        vec![TiePoint { slice: 0, age_mean: -times[0], age_sd: 1.0 }],
    )
    .unwrap();
    let ctx = ModelContext::new(record, forcing.clone(), cfg, init, AgeModel::Fixed(Chronology::new(times).unwrap()))
        .unwrap();
    (ctx, p)
}

/// Exact log-likelihood of the surrogate by a scalar Kalman filter on the
/// Euler–Maruyama transition composed over the substeps of each interval.
pub fn kalman_loglik(ctx: &ModelContext, p: &ModelParams) -> f64 {
    let AgeModel::Fixed(ch) = &ctx.ages else { panic!("surrogate needs fixed ages") };
    let y = ctx.record.observations();
    let d = &p.dynamics;
    let (dd, cc, sy) = (p.calib.d, p.calib.c, p.calib.sigma_y);
    let mut mean = ctx.initial_state.x1_mean;
    let mut var = ctx.initial_state.x1_sd.powi(2);
    let mut ll = 0.0;
    for m in 0..y.len() {
        if m > 0 {
            let span = ch.times[m] - ch.times[m - 1];
            let n = ctx.integrator.substeps(span);
            let h = span / n as f64;
            let a = 1.0 - d.beta1 * h;
            for _ in 0..n {
                mean = a * mean - d.beta0 * h;
                var = a * a * var + d.sigma1 * d.sigma1 * h;
            }
        }
        let s = cc * cc * var + sy * sy;
        let r = y[m] - (dd + cc * mean);
        ll += -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + r * r / s);
        let k = cc * var / s;
        mean += k * r;
        var *= 1.0 - k * cc;
    }
    ll
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Bootstrap standard error of the mean.
pub fn bootstrap_se(xs: &[f64], reps: usize, seed: u64) -> f64 {
    let mut rng = Streams::new(seed).get(Purpose::Test, 1, 0, 0);
    let n = xs.len();
    let means: Vec<f64> = (0..reps)
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    mean_sd(&means).1
}

/// Weighted quantile of `(value, weight)` pairs.
pub fn weighted_quantile(pairs: &mut [(f64, f64)], p: f64) -> f64 {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|x| x.1).sum();
    let mut acc = 0.0;
    for &(x, w) in pairs.iter() {
        acc += w / total;
        if acc >= p {
            return x;
        }
    }
    pairs.last().unwrap().0
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}
