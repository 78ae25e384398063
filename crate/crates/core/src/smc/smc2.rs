//! Outer SMC² loop over parameter particles.
//!
//! Each parameter particle carries its own inner particle filter. After every
//! slice the parameter weights are multiplied by the inner likelihood
//! increments; when the parameter ESS drops below the threshold the cloud is
//! resampled and rejuvenated by particle-marginal Metropolis–Hastings moves
//! with an independent Gaussian proposal fitted in unconstrained space.
//!
//! All randomness comes from counter-based streams keyed by particle id,
//! slice and move number, and all reductions run sequentially in a fixed
//! order, so results do not depend on the number of worker threads.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::filter::{ParticleFilter, SamplePath, ThetaModel};
use super::resample::{ess_log, normalize_log_weights, systematic_resample_log};
use super::{AgeModel, ModelContext};
use crate::archive::Chronology;
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::params::{ModelParams, ModelVariant, ParamLayout};
use crate::prior::Prior;
use crate::rng::{Purpose, Streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Smc2Config {
    pub n_theta: usize,
    pub n_x: usize,
    /// Rejuvenate when the parameter ESS falls below this fraction of
    /// `n_theta`.
    pub ess_threshold: f64,
    /// PMMH moves per rejuvenation.
    pub k_moves: usize,
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
    /// Draw one latent path per parameter particle after the run.
    pub sample_paths: bool,
}

impl Default for Smc2Config {
    fn default() -> Self {
        Self { n_theta: 1024, n_x: 1024, ess_threshold: 0.5, k_moves: 3, seed: 1, workers: 0, sample_paths: true }
    }
}

impl Smc2Config {
    pub fn validate(&self) -> Result<()> {
        if self.n_theta < 2 || self.n_x < 1 {
            return Err(Error::Config(format!(
                "need n_theta >= 2 and n_x >= 1, got {} and {}",
                self.n_theta, self.n_x
            )));
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= 1.0) {
            return Err(Error::Config(format!("ess_threshold must lie in (0, 1], got {}", self.ess_threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ThetaParticle {
    /// Stable identity; selects the particle's random streams.
    pub id: u64,
    /// Active parameter values.
    pub values: Vec<f64>,
    /// The same values in unconstrained coordinates.
    pub u: Vec<f64>,
    /// Prior log-density in unconstrained coordinates.
    pub log_prior_u: f64,
    pub params: ModelParams,
    pub filter: ParticleFilter,
}

impl ThetaParticle {
    pub fn log_lik(&self) -> f64 {
        self.filter.log_lik
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub log_z: f64,
    /// One increment per slice; `log_z` is their sum.
    pub increments: Vec<f64>,
    pub n_theta: usize,
    pub n_x: usize,
    pub seed: u64,
    pub rejuvenations: usize,
    pub acceptance_rates: Vec<f64>,
    pub model: ModelVariant,
    pub record_hash: String,
    /// Hash of the clamped chronology for fixed-chronology runs.
    pub chronology_hash: Option<String>,
    /// Monte Carlo standard error of `log_z`, when replicates are available.
    pub mc_error: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressRecord {
    /// 1-based slice index.
    pub slice: usize,
    /// Parameter ESS after reweighting, before any rejuvenation.
    pub ess: f64,
    pub log_z: f64,
    pub rejuvenated: bool,
    pub acceptance: Option<f64>,
}

/// A posterior draw of the whole latent path, attached to one parameter
/// particle.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPath {
    pub particle: usize,
    pub weight: f64,
    pub path: SamplePath,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub layout: ParamLayout,
    /// Active parameter values per particle.
    pub theta: Vec<Vec<f64>>,
    pub params: Vec<ModelParams>,
    /// Normalised parameter weights.
    pub weights: Vec<f64>,
    pub log_lik: Vec<f64>,
    /// One latent path per parameter particle with its own normalised
    /// weight; empty when path sampling is disabled.
    pub paths: Vec<PosteriorPath>,
    pub evidence: EvidenceEstimate,
    pub progress: Vec<ProgressRecord>,
}

pub fn chronology_hash(ch: &Chronology) -> String {
    let text: Vec<String> = ch.times.iter().map(|t| format!("{t:?}")).collect();
    sha256_hex(text.join(",").as_bytes())
}

pub struct Smc2<'a> {
    ctx: &'a ModelContext,
    prior: &'a Prior,
    variant: ModelVariant,
    layout: ParamLayout,
    cfg: Smc2Config,
    streams: Streams,
    pool: rayon::ThreadPool,
}

/// Weighted Gaussian fitted to the particle cloud in unconstrained space.
struct GaussianFit {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    /// Log-determinant of the Cholesky factor.
    log_det_l: f64,
}

impl GaussianFit {
    fn fit(points: &[&[f64]], weights: &[f64]) -> Self {
        let d = points[0].len();
        let mut mean = DVector::zeros(d);
        for (p, &w) in points.iter().zip(weights) {
            if w > 0.0 {
                mean += DVector::from_column_slice(p) * w;
            }
        }
        let mut cov = DMatrix::zeros(d, d);
        for (p, &w) in points.iter().zip(weights) {
            if w > 0.0 {
                let r = DVector::from_column_slice(p) - &mean;
                cov += &r * r.transpose() * w;
            }
        }
        for i in 0..d {
            // Keeps the fit proper when the cloud has collapsed onto few points.
            cov[(i, i)] += 1e-6 * cov[(i, i)] + 1e-10;
        }
        let chol = match cov.clone().cholesky() {
            Some(c) => c.l(),
            None => DMatrix::from_diagonal(&cov.diagonal().map(f64::sqrt)),
        };
        let log_det_l = chol.diagonal().iter().map(|v| v.ln()).sum();
        Self { mean, chol, log_det_l }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.mean + &self.chol * z).iter().copied().collect()
    }

    /// Log-density up to the dimension-only constant.
    fn ln_pdf(&self, u: &[f64]) -> f64 {
        let r = DVector::from_column_slice(u) - &self.mean;
        let z = self.chol.solve_lower_triangular(&r).unwrap_or_else(|| DVector::from_element(r.len(), f64::INFINITY));
        -0.5 * z.norm_squared() - self.log_det_l
    }
}

impl<'a> Smc2<'a> {
    pub fn new(ctx: &'a ModelContext, prior: &'a Prior, variant: ModelVariant, cfg: Smc2Config) -> Result<Self> {
        cfg.validate()?;
        let layout = ParamLayout::new(variant, ctx.fixed_chronology(), pinned_defaults(prior));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self { ctx, prior, variant, layout, streams: Streams::new(cfg.seed), cfg, pool })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn make_particle(&self, id: u64, values: Vec<f64>) -> ThetaParticle {
        let u = self.prior.to_unconstrained(&self.layout, &values);
        let log_prior_u = self.prior.ln_pdf_unconstrained(&self.layout, &u);
        let params = self.layout.expand(&values);
        let filter = match ThetaModel::new(self.ctx, params) {
            Ok(model) if log_prior_u.is_finite() => {
                let mut rng = self.streams.get(Purpose::FilterInit, id, 0, 0);
                ParticleFilter::init(&model, self.cfg.n_x, false, &mut rng)
            }
            _ => ParticleFilter::collapsed(1),
        };
        ThetaParticle { id, values, u, log_prior_u, params, filter }
    }

    /// Draws `n_theta` particles from the prior, with ids `0..n_theta`, and
    /// assimilates the first slice.
    pub fn initialize(&self) -> Vec<ThetaParticle> {
        self.pool.install(|| {
            (0..self.cfg.n_theta as u64)
                .into_par_iter()
                .map(|id| {
                    let mut rng = self.streams.get(Purpose::PriorDraw, id, 0, 0);
                    let values = self.prior.sample_active(&self.layout, &mut rng);
                    self.make_particle(id, values)
                })
                .collect()
        })
    }

    /// Builds particles at given parameter values (ids follow the order
    /// given).
    pub fn particles_at(&self, ids: &[u64], values: &[Vec<f64>]) -> Vec<ThetaParticle> {
        self.pool.install(|| {
            ids.par_iter().zip(values.par_iter()).map(|(&id, v)| self.make_particle(id, v.clone())).collect()
        })
    }

    pub fn run(&self) -> Result<RunOutput> {
        self.run_from(self.initialize(), &mut |_| {})
    }

    pub fn run_with_progress(&self, progress: &mut dyn FnMut(&ProgressRecord)) -> Result<RunOutput> {
        self.run_from(self.initialize(), progress)
    }

    /// Runs the outer loop from particles that have assimilated slice 1.
    pub fn run_from(
        &self,
        mut particles: Vec<ThetaParticle>,
        progress: &mut dyn FnMut(&ProgressRecord),
    ) -> Result<RunOutput> {
        let started = Instant::now();
        let m_total = self.ctx.slices();
        let n = particles.len();
        if n < 2 {
            return Err(Error::Config("need at least two parameter particles".into()));
        }
        let mut log_w: Vec<f64> = particles.iter().map(|p| p.log_lik() - (n as f64).ln()).collect();
        let mut increments = Vec::with_capacity(m_total);
        let mut log_z = 0.0;
        let mut acceptance_rates = Vec::new();
        let mut history = Vec::with_capacity(m_total);

        for m in 0..m_total {
            if m > 0 {
                let incr: Vec<f64> = self.pool.install(|| {
                    particles
                        .par_iter_mut()
                        .map(|p| {
                            if p.filter.degenerate {
                                return f64::NEG_INFINITY;
                            }
                            let model = ThetaModel::new(self.ctx, p.params).expect("validated at creation");
                            let mut rng = self.streams.get(Purpose::FilterStep, p.id, m as u64, 0);
                            p.filter.step(&model, &mut rng).unwrap_or(f64::NEG_INFINITY)
                        })
                        .collect()
                });
                for (w, l) in log_w.iter_mut().zip(&incr) {
                    *w += l;
                }
            }
            let incr = normalize_log_weights(&mut log_w);
            if !incr.is_finite() {
                return Err(Error::RunCollapse {
                    slice: m + 1,
                    detail: format!("all {n} parameter particles have zero likelihood"),
                });
            }
            increments.push(incr);
            log_z += incr;
            let ess = ess_log(&log_w);
            let mut record = ProgressRecord { slice: m + 1, ess, log_z, rejuvenated: false, acceptance: None };
            if ess < self.cfg.ess_threshold * n as f64 {
                let (next, rate) = self.rejuvenate(particles, &log_w, m);
                particles = next;
                log_w = vec![-(n as f64).ln(); n];
                acceptance_rates.push(rate);
                record.rejuvenated = true;
                record.acceptance = Some(rate);
            }
            log::debug!("slice {} ess {:.1} log_z {:.4}", record.slice, record.ess, record.log_z);
            progress(&record);
            history.push(record);
        }

        let weights: Vec<f64> = log_w.iter().map(|l| l.exp()).collect();
        let paths = if self.cfg.sample_paths { self.sample_paths(&particles, &log_w) } else { Vec::new() };
        let evidence = EvidenceEstimate {
            log_z,
            increments,
            n_theta: n,
            n_x: self.cfg.n_x,
            seed: self.cfg.seed,
            rejuvenations: acceptance_rates.len(),
            acceptance_rates,
            model: self.variant,
            record_hash: self.ctx.record.content_hash(),
            chronology_hash: match &self.ctx.ages {
                AgeModel::Fixed(ch) => Some(chronology_hash(ch)),
                AgeModel::Joint => None,
            },
            mc_error: None,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        Ok(RunOutput {
            layout: self.layout.clone(),
            theta: particles.iter().map(|p| p.values.clone()).collect(),
            params: particles.iter().map(|p| p.params).collect(),
            weights,
            log_lik: particles.iter().map(|p| p.log_lik()).collect(),
            paths,
            evidence,
            progress: history,
        })
    }

    /// Resample (in id order, so the outcome does not depend on storage
    /// order), then apply `k_moves` PMMH moves to every particle. Returns the
    /// new particles and the acceptance rate.
    fn rejuvenate(&self, particles: Vec<ThetaParticle>, log_w: &[f64], m: usize) -> (Vec<ThetaParticle>, f64) {
        let mut order: Vec<usize> = (0..particles.len()).collect();
        order.sort_by_key(|&i| particles[i].id);
        let sorted_w: Vec<f64> = order.iter().map(|&i| log_w[i]).collect();
        let weights: Vec<f64> = sorted_w.iter().map(|l| l.exp()).collect();
        let points: Vec<&[f64]> = order.iter().map(|&i| particles[i].u.as_slice()).collect();
        let fit = GaussianFit::fit(&points, &weights);

        let mut rng = self.streams.get(Purpose::Resample, 0, m as u64, 0);
        let ancestors = systematic_resample_log(&sorted_w, &mut rng);
        let mut next: Vec<ThetaParticle> = ancestors
            .iter()
            .enumerate()
            .map(|(j, &a)| {
                let mut p = particles[order[a]].clone();
                p.id = j as u64;
                p
            })
            .collect();
        drop(particles);

        let upto = m + 1;
        let accepted: usize = self.pool.install(|| {
            next.par_iter_mut()
                .map(|p| {
                    let mut accepted = 0;
                    let mut rng = self.streams.get(Purpose::MoveProposal, p.id, m as u64, 0);
                    let mut current_q = fit.ln_pdf(&p.u);
                    for k in 0..self.cfg.k_moves {
                        let u_new = fit.sample(&mut rng);
                        let log_u: f64 = rng.random::<f64>().ln();
                        let lp_new = self.prior.ln_pdf_unconstrained(&self.layout, &u_new);
                        if !lp_new.is_finite() {
                            continue;
                        }
                        let values = self.prior.from_unconstrained(&self.layout, &u_new);
                        let params = self.layout.expand(&values);
                        let Ok(model) = ThetaModel::new(self.ctx, params) else {
                            continue;
                        };
                        let mut frng = self.streams.get(Purpose::MoveFilter, p.id, m as u64, k as u64);
                        let filter = ParticleFilter::run(&model, self.cfg.n_x, upto, false, &mut frng);
                        if filter.degenerate {
                            continue;
                        }
                        let q_new = fit.ln_pdf(&u_new);
                        let log_alpha = log_accept_ratio(
                            (filter.log_lik, lp_new, q_new),
                            (p.filter.log_lik, p.log_prior_u, current_q),
                        );
                        if log_u < log_alpha {
                            *p = ThetaParticle { id: p.id, values, u: u_new, log_prior_u: lp_new, params, filter };
                            current_q = q_new;
                            accepted += 1;
                        }
                    }
                    accepted
                })
                .collect::<Vec<_>>()
                .into_iter()
                .sum()
        });
        let rate = accepted as f64 / (next.len() * self.cfg.k_moves.max(1)) as f64;
        (next, rate)
    }

    /// Runs a fresh path-storing filter per particle, draws one path from
    /// it, and reweights the particle by the ratio of the fresh to the stored
    /// likelihood estimate, which keeps (parameters, path) pairs exact draws
    /// from the joint posterior.
    fn sample_paths(&self, particles: &[ThetaParticle], log_w: &[f64]) -> Vec<PosteriorPath> {
        let m_total = self.ctx.slices();
        let drawn: Vec<Option<(f64, SamplePath)>> = self.pool.install(|| {
            particles
                .par_iter()
                .zip(log_w.par_iter())
                .map(|(p, &lw)| {
                    if !(lw > f64::NEG_INFINITY) || p.filter.degenerate {
                        return None;
                    }
                    let model = ThetaModel::new(self.ctx, p.params).ok()?;
                    let mut rng = self.streams.get(Purpose::PathPass, p.id, 0, 0);
                    let pf = ParticleFilter::run(&model, self.cfg.n_x, m_total, true, &mut rng);
                    let path = pf.draw_path(&mut rng)?;
                    Some((lw + pf.log_lik - p.filter.log_lik, path))
                })
                .collect()
        });
        let mut lw: Vec<f64> = drawn.iter().map(|d| d.as_ref().map_or(f64::NEG_INFINITY, |x| x.0)).collect();
        if !normalize_log_weights(&mut lw).is_finite() {
            return Vec::new();
        }
        drawn
            .into_iter()
            .enumerate()
            .filter_map(|(i, d)| d.map(|(_, path)| PosteriorPath { particle: i, weight: lw[i].exp(), path }))
            .collect()
    }
}

/// Log acceptance ratio of an independence Metropolis–Hastings move. Each
/// argument is `(log-likelihood estimate, log prior, log proposal density)`;
/// the incumbent keeps the estimate it was accepted with.
fn log_accept_ratio(proposed: (f64, f64, f64), incumbent: (f64, f64, f64)) -> f64 {
    (proposed.0 + proposed.1 - proposed.2) - (incumbent.0 + incumbent.1 - incumbent.2)
}

/// Values used for parameters that are not sampled: the prior median where
/// one exists; irrelevant for pinned forcing weights, which are zeroed.
fn pinned_defaults(prior: &Prior) -> [f64; crate::params::N_PARAMS] {
    use crate::prior::PriorDist;
    std::array::from_fn(|i| match *prior.dist(i) {
        PriorDist::Uniform { lo, hi } => 0.5 * (lo + hi),
        PriorDist::Gaussian { mean, .. } => mean,
        PriorDist::LogGaussian { mean, .. } => mean.exp(),
        PriorDist::TruncatedGaussian { mean, lo, hi, .. } => mean.clamp(lo, hi),
    })
}

/// Joint inference of ages, states and parameters.
pub fn smc2_run(ctx: &ModelContext, prior: &Prior, variant: ModelVariant, cfg: &Smc2Config) -> Result<RunOutput> {
    Smc2::new(ctx, prior, variant, cfg.clone())?.run()
}

/// Inference with the observation ages clamped to `chronology`.
pub fn fixed_chronology_run(
    base: &ModelContext,
    chronology: &Chronology,
    prior: &Prior,
    variant: ModelVariant,
    cfg: &Smc2Config,
) -> Result<RunOutput> {
    let ctx = ModelContext::new(
        base.record.clone(),
        base.forcing.clone(),
        base.integrator,
        base.initial_state,
        AgeModel::Fixed(chronology.clone()),
    )?
    .with_retry_cap(base.retry_cap);
    smc2_run(&ctx, prior, variant, cfg)
}
