//! Bootstrap-style particle filter over `(X1, X2, T)` for one parameter
//! vector.
//!
//! Slices are processed deepest (oldest) first. Ages are proposed from the
//! untruncated inverse-Gaussian increment and corrected by importance
//! weights; the climate state is propagated through the SDE. Resampling is
//! systematic and adaptive (inner ESS below half the particle count).

use rand::Rng;
use rand_distr::StandardNormal;

use super::resample::{ess_log, normalize_log_weights, systematic_resample_log};
use super::{AgeModel, ModelContext};
use crate::archive::{age_marginal_logpdf, compact_correct, propose_from, sample_ig};
use crate::climate::{integrate, ClimateState};
use crate::error::{Error, Result};
use crate::observation::{obs_loglik, tiepoint_loglik};
use crate::params::ModelParams;

/// Parameter-dependent quantities cached for one filter run.
#[derive(Debug, Clone)]
pub struct ThetaModel<'a> {
    pub ctx: &'a ModelContext,
    pub params: ModelParams,
    hc: Vec<f64>,
    inc_mean: Vec<f64>,
    inc_shape: Vec<f64>,
}

impl<'a> ThetaModel<'a> {
    pub fn new(ctx: &'a ModelContext, params: ModelParams) -> Result<Self> {
        params.dynamics.validate()?;
        params.calib.validate()?;
        let (hc, inc_mean, inc_shape) = if ctx.fixed_chronology() {
            (Vec::new(), Vec::new(), Vec::new())
        } else {
            params.archive.validate()?;
            let hc = ctx
                .depths
                .iter()
                .map(|&h| compact_correct(h, &params.archive))
                .collect::<Result<Vec<_>>>()?;
            let mut inc_mean = vec![f64::NAN; hc.len()];
            let mut inc_shape = vec![f64::NAN; hc.len()];
            for m in 1..hc.len() {
                let (a, b) = params.archive.passage(hc[m - 1] - hc[m]);
                inc_mean[m] = a;
                inc_shape[m] = b;
            }
            (hc, inc_mean, inc_shape)
        };
        Ok(Self { ctx, params, hc, inc_mean, inc_shape })
    }

    pub fn corrected_depths(&self) -> &[f64] {
        &self.hc
    }
}

/// Ancestry and states of every slice, kept when whole paths are needed.
#[derive(Debug, Clone, Default)]
struct Genealogy {
    x1: Vec<Vec<f64>>,
    x2: Vec<Vec<f64>>,
    t: Vec<Vec<f64>>,
    /// `ancestors[m][i]`: index at slice `m - 1` of particle `i` at slice `m`.
    ancestors: Vec<Vec<u32>>,
}

/// One latent path `(T_m, x1_m, x2_m)` for slices `1..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub t: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ParticleFilter {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub t: Vec<f64>,
    /// Normalised log-weights.
    pub log_w: Vec<f64>,
    /// Number of slices assimilated so far.
    pub processed: usize,
    pub log_lik: f64,
    pub increments: Vec<f64>,
    pub degenerate: bool,
    pub resamples: usize,
    genealogy: Option<Genealogy>,
}

impl ParticleFilter {
    /// Placeholder for a parameter vector whose likelihood is zero.
    pub fn collapsed(processed: usize) -> Self {
        Self {
            x1: Vec::new(),
            x2: Vec::new(),
            t: Vec::new(),
            log_w: Vec::new(),
            processed,
            log_lik: f64::NEG_INFINITY,
            increments: vec![f64::NEG_INFINITY; processed],
            degenerate: true,
            resamples: 0,
            genealogy: None,
        }
    }

    pub fn len(&self) -> usize {
        self.x1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x1.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_w.iter().map(|l| l.exp()).collect()
    }

    pub fn ess(&self) -> f64 {
        ess_log(&self.log_w)
    }

    /// Draws an initial particle set and assimilates the first slice.
    pub fn init<R: Rng + ?Sized>(model: &ThetaModel, n: usize, keep_paths: bool, rng: &mut R) -> Self {
        assert!(n > 0, "particle count must be positive");
        let ctx = model.ctx;
        let init = &ctx.initial_state;
        let (lo, hi) = ctx.forcing.grid().window();
        let mut x1 = vec![0.0; n];
        let mut x2 = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut log_w = vec![0.0; n];
        let ln_n = (n as f64).ln();
        for i in 0..n {
            let (ti, lw_age) = match &ctx.ages {
                AgeModel::Fixed(ch) => (ch.times[0], 0.0),
                AgeModel::Joint => match ctx.tie[0] {
                    // Tie-point proposal; its density cancels against the
                    // constraint, leaving the anchored age prior.
                    Some((mean, sd)) => {
                        let z: f64 = rng.sample(StandardNormal);
                        let ti = -mean + sd * z;
                        (ti, age_marginal_logpdf(ti, model.hc[0], &model.params.archive))
                    }
                    None => {
                        let (a, b) = model.params.archive.passage(model.hc[0]);
                        (-sample_ig(a, b, rng).expect("validated archive parameters"), 0.0)
                    }
                },
            };
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            x1[i] = init.x1_mean + init.x1_sd * z1;
            x2[i] = init.x2_mean + init.x2_sd * z2;
            t[i] = ti;
            let in_window = ti >= lo && ti <= hi && ti < 0.0;
            let l = lw_age + obs_loglik(ctx.y[0], x1[i], &model.params.calib);
            log_w[i] = if in_window && l.is_finite() { l - ln_n } else { f64::NEG_INFINITY };
        }
        let incr = normalize_log_weights(&mut log_w);
        let degenerate = !incr.is_finite();
        let genealogy = keep_paths.then(|| Genealogy {
            x1: vec![x1.clone()],
            x2: vec![x2.clone()],
            t: vec![t.clone()],
            ancestors: vec![(0..n as u32).collect()],
        });
        Self {
            x1,
            x2,
            t,
            log_w,
            processed: 1,
            log_lik: if degenerate { f64::NEG_INFINITY } else { incr },
            increments: vec![incr],
            degenerate,
            resamples: 0,
            genealogy,
        }
    }

    /// Assimilates the next slice and returns its log-likelihood increment.
    /// Fails with [`Error::FilterCollapse`] (1-based slice) when every
    /// particle has zero weight.
    pub fn step<R: Rng + ?Sized>(&mut self, model: &ThetaModel, rng: &mut R) -> Result<f64> {
        let m = self.processed;
        let ctx = model.ctx;
        if m >= ctx.slices() {
            return Err(Error::Config(format!("filter already assimilated all {m} slices")));
        }
        if self.degenerate {
            return Err(Error::FilterCollapse { slice: m });
        }
        let n = self.len();
        let ancestors = if self.ess() < 0.5 * n as f64 {
            let anc = systematic_resample_log(&self.log_w, rng);
            self.x1 = anc.iter().map(|&a| self.x1[a]).collect();
            self.x2 = anc.iter().map(|&a| self.x2[a]).collect();
            self.t = anc.iter().map(|&a| self.t[a]).collect();
            self.log_w.fill(-(n as f64).ln());
            self.resamples += 1;
            Some(anc)
        } else {
            None
        };

        let p = &model.params;
        let y = ctx.y[m];
        let grid = ctx.forcing.grid();
        for i in 0..n {
            if self.log_w[i] == f64::NEG_INFINITY {
                continue;
            }
            let t_prev = self.t[i];
            let (t_new, mut l) = match &ctx.ages {
                AgeModel::Fixed(ch) => (ch.times[m], 0.0),
                AgeModel::Joint => {
                    match propose_from(
                        t_prev,
                        model.hc[m],
                        model.hc[m - 1],
                        model.inc_mean[m],
                        model.inc_shape[m],
                        &p.archive,
                        ctx.retry_cap,
                        rng,
                    ) {
                        Some(prop) => {
                            let tie = ctx.tie[m].map_or(0.0, |(mean, sd)| tiepoint_loglik(prop.t, mean, sd));
                            (prop.t, prop.log_weight + tie)
                        }
                        None => {
                            self.log_w[i] = f64::NEG_INFINITY;
                            continue;
                        }
                    }
                }
            };
            let state = ClimateState::new(self.x1[i], self.x2[i], t_prev);
            match integrate(state, t_new, &p.dynamics, &p.weights, grid, &ctx.integrator, rng) {
                Ok(s) => {
                    self.x1[i] = s.x1;
                    self.x2[i] = s.x2;
                    self.t[i] = t_new;
                    l += obs_loglik(y, s.x1, &p.calib);
                }
                Err(_) => l = f64::NEG_INFINITY,
            }
            self.log_w[i] = if l.is_finite() { self.log_w[i] + l } else { f64::NEG_INFINITY };
        }
        let incr = normalize_log_weights(&mut self.log_w);
        self.processed += 1;
        self.increments.push(incr);
        if let Some(g) = self.genealogy.as_mut() {
            g.x1.push(self.x1.clone());
            g.x2.push(self.x2.clone());
            g.t.push(self.t.clone());
            g.ancestors.push(match ancestors {
                Some(a) => a.into_iter().map(|a| a as u32).collect(),
                None => (0..n as u32).collect(),
            });
        }
        if !incr.is_finite() {
            self.degenerate = true;
            self.log_lik = f64::NEG_INFINITY;
            return Err(Error::FilterCollapse { slice: m + 1 });
        }
        self.log_lik += incr;
        Ok(incr)
    }

    /// Runs a fresh filter over the first `upto` slices. A collapse yields a
    /// degenerate filter with `log_lik = -∞` rather than an error.
    pub fn run<R: Rng + ?Sized>(model: &ThetaModel, n: usize, upto: usize, keep_paths: bool, rng: &mut R) -> Self {
        let mut pf = Self::init(model, n, keep_paths, rng);
        while pf.processed < upto && !pf.degenerate {
            let _ = pf.step(model, rng);
        }
        pf
    }

    /// Draws one whole path in proportion to the final weights (requires the
    /// filter to have been built with `keep_paths`).
    pub fn draw_path<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<SamplePath> {
        let g = self.genealogy.as_ref()?;
        if self.degenerate {
            return None;
        }
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut idx = None;
        let mut last_positive = 0;
        for (i, &l) in self.log_w.iter().enumerate() {
            let w = l.exp();
            if w > 0.0 {
                last_positive = i;
            }
            cum += w;
            if u < cum {
                idx = Some(i);
                break;
            }
        }
        let mut i = idx.unwrap_or(last_positive);
        let m = g.x1.len();
        let mut path = SamplePath { t: vec![0.0; m], x1: vec![0.0; m], x2: vec![0.0; m] };
        for s in (0..m).rev() {
            path.t[s] = g.t[s][i];
            path.x1[s] = g.x1[s][i];
            path.x2[s] = g.x2[s][i];
            i = g.ancestors[s][i] as usize;
        }
        Some(path)
    }
}

/// Initial particle set and the log-likelihood of the first slice.
pub fn pf_init<R: Rng + ?Sized>(model: &ThetaModel, n: usize, rng: &mut R) -> Result<(ParticleFilter, f64)> {
    let pf = ParticleFilter::init(model, n, false, rng);
    if pf.degenerate {
        return Err(Error::FilterCollapse { slice: 1 });
    }
    let incr = pf.log_lik;
    Ok((pf, incr))
}

/// Assimilates the next slice.
pub fn pf_step<R: Rng + ?Sized>(pf: &mut ParticleFilter, model: &ThetaModel, rng: &mut R) -> Result<f64> {
    pf.step(model, rng)
}

/// Explicit form of the age log-weight, used to cross-check the simplified
/// form in tests.
#[cfg(test)]
pub(crate) fn explicit_age_weight(t: f64, t_prev: f64, model: &ThetaModel, m: usize) -> f64 {
    use crate::archive::{age_transition_logpdf, ig_logcdf, ig_logpdf};
    let trans = age_transition_logpdf(t, t_prev, model.hc[m], model.hc[m - 1], &model.params.archive).unwrap();
    let (a, b) = (model.inc_mean[m], model.inc_shape[m]);
    let q = ig_logpdf(t - t_prev, a, b).unwrap() - ig_logcdf(-t_prev, a, b).unwrap();
    trans - q
}
