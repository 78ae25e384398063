//! Posterior reportables: per-slice HDR intervals, chronology draws, age
//! spread and Bayes factors.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archive::Chronology;
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::params::ModelVariant;
use crate::smc::{EvidenceEstimate, PosteriorPath, RunOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Age,
    X1,
    X2,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::Age, Quantity::X1, Quantity::X2];

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Age => "age",
            Quantity::X1 => "x1",
            Quantity::X2 => "x2",
        }
    }

    fn of(self, path: &crate::smc::SamplePath, m: usize) -> f64 {
        match self {
            Quantity::Age => path.t[m],
            Quantity::X1 => path.x1[m],
            Quantity::X2 => path.x2[m],
        }
    }
}

/// Kernel density settings. The grid spans the sample range widened by
/// `extent` bandwidths on each side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub points: usize,
    pub extent: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { points: 512, extent: 3.0 }
    }
}

/// Weighted Gaussian KDE tabulated on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl Kde {
    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Probability mass of each grid cell, summing to one.
    pub fn cell_masses(&self) -> Vec<f64> {
        let total: f64 = self.density.iter().sum();
        self.density.iter().map(|d| d / total).collect()
    }
}

fn normalized(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().filter(|w| w.is_finite() && **w > 0.0).sum();
    weights.iter().map(|&w| if w.is_finite() && w > 0.0 { w / total } else { 0.0 }).collect()
}

/// Weighted quantile by the inverse empirical CDF.
fn weighted_quantile(sorted: &[(f64, f64)], p: f64) -> f64 {
    let mut acc = 0.0;
    for &(x, w) in sorted {
        acc += w;
        if acc >= p {
            return x;
        }
    }
    sorted.last().map_or(f64::NAN, |s| s.0)
}

/// Silverman's rule of thumb with the Kish effective sample size.
pub fn silverman_bandwidth(values: &[f64], weights: &[f64]) -> f64 {
    let w = normalized(weights);
    let mean: f64 = values.iter().zip(&w).map(|(x, w)| x * w).sum();
    let var: f64 = values.iter().zip(&w).map(|(x, w)| w * (x - mean).powi(2)).sum();
    let sd = var.sqrt();
    let mut sorted: Vec<(f64, f64)> = values.iter().copied().zip(w.iter().copied()).filter(|p| p.1 > 0.0).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let iqr = weighted_quantile(&sorted, 0.75) - weighted_quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let n_eff = 1.0 / w.iter().map(|w| w * w).sum::<f64>();
    0.9 * spread * n_eff.powf(-0.2)
}

/// Linear binning onto the grid followed by discrete convolution with the
/// Gaussian kernel. `None` when the positive-weight samples are all equal.
pub fn weighted_kde(values: &[f64], weights: &[f64], grid: &GridConfig) -> Option<Kde> {
    let w = normalized(weights);
    let live = || values.iter().zip(&w).filter(|(x, w)| **w > 0.0 && x.is_finite()).map(|(x, _)| *x);
    let lo = live().fold(f64::INFINITY, f64::min);
    let hi = live().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return None;
    }
    let h = silverman_bandwidth(values, &w);
    if !(h > 0.0) {
        return None;
    }
    let n = grid.points.max(2);
    let a = lo - grid.extent * h;
    let b = hi + grid.extent * h;
    let dx = (b - a) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| a + i as f64 * dx).collect();

    let mut bins = vec![0.0; n];
    for (&x, &wi) in values.iter().zip(&w) {
        if wi <= 0.0 || !x.is_finite() {
            continue;
        }
        let pos = ((x - a) / dx).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        let frac = pos - i as f64;
        bins[i] += wi * (1.0 - frac);
        bins[i + 1] += wi * frac;
    }
    let reach = ((5.0 * h / dx).ceil() as usize).min(n - 1);
    let kernel: Vec<f64> = (0..=reach).map(|k| (-0.5 * (k as f64 * dx / h).powi(2)).exp()).collect();
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    let mut density = vec![0.0; n];
    for (j, &bj) in bins.iter().enumerate() {
        if bj == 0.0 {
            continue;
        }
        let start = j.saturating_sub(reach);
        let end = (j + reach).min(n - 1);
        for (i, d) in density.iter_mut().enumerate().take(end + 1).skip(start) {
            *d += bj * kernel[i.abs_diff(j)] * norm;
        }
    }
    Some(Kde { grid: xs, density, bandwidth: h })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdrInterval {
    /// 1-based slice index; 0 for free-standing samples.
    pub slice: usize,
    pub quantity: Quantity,
    /// Disjoint sub-intervals in increasing order.
    pub intervals: Vec<(f64, f64)>,
    pub mass: f64,
    /// Set when the samples were all identical and the region collapsed to
    /// a point.
    pub degenerate: bool,
}

impl HdrInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= v && v <= hi)
    }

    pub fn width(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }
}

/// Highest-density grid cells accumulated to `mass`, merged into intervals
/// bounded by cell edges. Returns the selected cell indices alongside.
pub fn hdr_cells(kde: &Kde, mass: f64) -> (Vec<(f64, f64)>, Vec<usize>) {
    let masses = kde.cell_masses();
    let mut order: Vec<usize> = (0..masses.len()).collect();
    order.sort_by(|&i, &j| masses[j].total_cmp(&masses[i]).then(i.cmp(&j)));
    let mut chosen = Vec::new();
    let mut acc = 0.0;
    for i in order {
        if acc >= mass {
            break;
        }
        acc += masses[i];
        chosen.push(i);
    }
    chosen.sort_unstable();
    let half = 0.5 * kde.spacing();
    let (first, last) = (kde.grid[0], *kde.grid.last().unwrap());
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut prev: Option<usize> = None;
    for &i in &chosen {
        let lo = (kde.grid[i] - half).max(first);
        let hi = (kde.grid[i] + half).min(last);
        match (prev, intervals.last_mut()) {
            (Some(p), Some(cur)) if p + 1 == i => cur.1 = hi,
            _ => intervals.push((lo, hi)),
        }
        prev = Some(i);
    }
    (intervals, chosen)
}

/// HDR of a weighted sample. A mass of one returns the sample range.
pub fn hdr(values: &[f64], weights: &[f64], mass: f64, grid: &GridConfig) -> Result<HdrInterval> {
    if values.len() != weights.len() || values.is_empty() {
        return Err(Error::Consistency(format!(
            "hdr needs matching non-empty values and weights ({} vs {})",
            values.len(),
            weights.len()
        )));
    }
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(Error::Config(format!("hdr mass must be in (0, 1], got {mass}")));
    }
    let w = normalized(weights);
    if !w.iter().any(|&x| x > 0.0) {
        return Err(Error::Consistency("hdr weights are all zero".into()));
    }
    let live: Vec<f64> = values.iter().zip(&w).filter(|(_, w)| **w > 0.0).map(|(x, _)| *x).collect();
    let lo = live.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = live.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let base = HdrInterval { slice: 0, quantity: Quantity::Age, intervals: vec![], mass, degenerate: false };
    if mass >= 1.0 {
        return Ok(HdrInterval { intervals: vec![(lo, hi)], degenerate: hi == lo, ..base });
    }
    match weighted_kde(values, &w, grid) {
        Some(kde) => Ok(HdrInterval { intervals: hdr_cells(&kde, mass).0, ..base }),
        None => {
            log::warn!("hdr: all samples equal {lo}; returning a point interval");
            Ok(HdrInterval { intervals: vec![(lo, lo)], degenerate: true, ..base })
        }
    }
}

/// Marginal HDRs of age, x1 and x2 at every slice.
pub fn slice_hdrs(paths: &[PosteriorPath], mass: f64, grid: &GridConfig) -> Result<Vec<HdrInterval>> {
    let Some(first) = paths.first() else {
        return Err(Error::Consistency("no posterior paths to summarise".into()));
    };
    let m_total = first.path.t.len();
    let weights: Vec<f64> = paths.iter().map(|p| p.weight).collect();
    let mut out = Vec::with_capacity(3 * m_total);
    for m in 0..m_total {
        for q in Quantity::ALL {
            let values: Vec<f64> = paths.iter().map(|p| q.of(&p.path, m)).collect();
            let mut h = hdr(&values, &weights, mass, grid)?;
            h.slice = m + 1;
            h.quantity = q;
            out.push(h);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeSdProfile {
    /// Weighted sd of the age at each slice, kyr.
    pub per_slice: Vec<f64>,
    pub mean: f64,
}

/// Weighted posterior sd of each slice age and its mean over slices.
pub fn age_sd_profile(chronologies: &[Vec<f64>], weights: &[f64]) -> Result<AgeSdProfile> {
    let Some(first) = chronologies.first() else {
        return Err(Error::Consistency("no chronologies to summarise".into()));
    };
    if chronologies.len() != weights.len() || chronologies.iter().any(|c| c.len() != first.len()) {
        return Err(Error::Consistency("chronologies and weights do not line up".into()));
    }
    let w = normalized(weights);
    let per_slice: Vec<f64> = (0..first.len())
        .map(|m| {
            let mean: f64 = chronologies.iter().zip(&w).map(|(c, w)| w * -c[m]).sum();
            let var: f64 = chronologies.iter().zip(&w).map(|(c, w)| w * (-c[m] - mean).powi(2)).sum();
            var.sqrt()
        })
        .collect();
    let mean = per_slice.iter().sum::<f64>() / per_slice.len().max(1) as f64;
    Ok(AgeSdProfile { per_slice, mean })
}

pub fn path_age_sd_profile(paths: &[PosteriorPath]) -> Result<AgeSdProfile> {
    let ch: Vec<Vec<f64>> = paths.iter().map(|p| p.path.t.clone()).collect();
    let w: Vec<f64> = paths.iter().map(|p| p.weight).collect();
    age_sd_profile(&ch, &w)
}

/// Weighted mean age at each slice.
pub fn posterior_mean_chronology(paths: &[PosteriorPath]) -> Result<Chronology> {
    let Some(first) = paths.first() else {
        return Err(Error::Consistency("no posterior paths".into()));
    };
    let w = normalized(&paths.iter().map(|p| p.weight).collect::<Vec<_>>());
    let times = (0..first.path.t.len()).map(|m| paths.iter().zip(&w).map(|(p, w)| w * p.path.t[m]).sum()).collect();
    Chronology::new(times)
}

/// Multinomial draws of whole chronologies. Returns the index of the source
/// path with each draw.
pub fn sample_chronologies<R: Rng + ?Sized>(
    paths: &[PosteriorPath],
    k: usize,
    rng: &mut R,
) -> Result<Vec<(usize, Chronology)>> {
    if k == 0 {
        return Err(Error::Config("number of chronology draws must be at least 1".into()));
    }
    if paths.is_empty() {
        return Err(Error::Consistency("no posterior paths to draw from".into()));
    }
    let w = normalized(&paths.iter().map(|p| p.weight).collect::<Vec<_>>());
    let mut cdf = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for x in &w {
        acc += x;
        cdf.push(acc);
    }
    (0..k)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let mut i = cdf.partition_point(|&c| c <= u).min(w.len() - 1);
            while w[i] == 0.0 && i > 0 {
                i -= 1;
            }
            Ok((i, Chronology::new(paths[i].path.t.clone())?))
        })
        .collect()
}

/// Verbal scale for `2 ln B` after Kass and Raftery (1995).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceBand {
    NotWorthMoreThanABareMention,
    Positive,
    Strong,
    VeryStrong,
}

impl EvidenceBand {
    pub fn from_log_bf(log_bf: f64) -> Self {
        let two_ln = 2.0 * log_bf.abs();
        if two_ln < 2.0 {
            EvidenceBand::NotWorthMoreThanABareMention
        } else if two_ln < 6.0 {
            EvidenceBand::Positive
        } else if two_ln < 10.0 {
            EvidenceBand::Strong
        } else {
            EvidenceBand::VeryStrong
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFactor {
    pub model_1: ModelVariant,
    pub model_2: ModelVariant,
    pub log_z_1: f64,
    pub log_z_2: f64,
    /// `log_z_1 - log_z_2`.
    pub log_bf: f64,
    pub log10_bf: f64,
    pub mc_error_1: Option<f64>,
    pub mc_error_2: Option<f64>,
    /// Combined standard error, present when both sides carry one.
    pub mc_error: Option<f64>,
    pub band: EvidenceBand,
    /// The model the evidence points to; `None` on an exact tie.
    pub favours: Option<ModelVariant>,
}

pub fn bayes_factor(ev1: &EvidenceEstimate, ev2: &EvidenceEstimate) -> Result<BayesFactor> {
    if ev1.record_hash != ev2.record_hash {
        return Err(Error::Consistency(format!(
            "evidence estimates come from different records ({} vs {})",
            ev1.record_hash, ev2.record_hash
        )));
    }
    if ev1.chronology_hash != ev2.chronology_hash {
        return Err(Error::Consistency("evidence estimates use different fixed chronologies".into()));
    }
    let log_bf = ev1.log_z - ev2.log_z;
    let mc_error = match (ev1.mc_error, ev2.mc_error) {
        (Some(a), Some(b)) => Some(a.hypot(b)),
        _ => None,
    };
    let favours = if log_bf > 0.0 {
        Some(ev1.model)
    } else if log_bf < 0.0 {
        Some(ev2.model)
    } else {
        None
    };
    Ok(BayesFactor {
        model_1: ev1.model,
        model_2: ev2.model,
        log_z_1: ev1.log_z,
        log_z_2: ev2.log_z,
        log_bf,
        log10_bf: log_bf / std::f64::consts::LN_10,
        mc_error_1: ev1.mc_error,
        mc_error_2: ev2.mc_error,
        mc_error,
        band: EvidenceBand::from_log_bf(log_bf),
        favours,
    })
}

/// Sample sd of replicate `log_Z` values: the Monte Carlo error of a single
/// run. `None` with fewer than two finite replicates.
pub fn replicate_mc_error(log_zs: &[f64]) -> Option<f64> {
    let v: Vec<f64> = log_zs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.len() < 2 {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    Some(var.sqrt())
}

/// One row per parameter particle: the sampled parameters in canonical order
/// and the normalised weight. Pinned parameters have no column.
pub fn posterior_csv(out: &RunOutput) -> String {
    let mut s = out.layout.names().join(",");
    s.push_str(",weight\n");
    for (values, w) in out.theta.iter().zip(&out.weights) {
        for v in values {
            s.push_str(&fmt_f64(*v));
            s.push(',');
        }
        s.push_str(&fmt_f64(*w));
        s.push('\n');
    }
    s
}

pub fn chronology_csv(paths: &[PosteriorPath]) -> String {
    let mut s = String::from("particle,slice,T_kyr,x1,x2,weight\n");
    for p in paths {
        for m in 0..p.path.t.len() {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                p.particle,
                m + 1,
                fmt_f64(p.path.t[m]),
                fmt_f64(p.path.x1[m]),
                fmt_f64(p.path.x2[m]),
                fmt_f64(p.weight)
            )
            .unwrap();
        }
    }
    s
}

pub fn hdr_csv(hdrs: &[HdrInterval]) -> String {
    let mut s = String::from("slice,quantity,lo,hi,segment\n");
    for h in hdrs {
        for (k, (lo, hi)) in h.intervals.iter().enumerate() {
            writeln!(s, "{},{},{},{},{}", h.slice, h.quantity.as_str(), fmt_f64(*lo), fmt_f64(*hi), k + 1).unwrap();
        }
    }
    s
}

/// Reads a chronology-draw CSV back into weighted paths.
pub fn parse_chronology_csv(text: &str, path: &std::path::Path) -> Result<Vec<PosteriorPath>> {
    let table = crate::io::CsvTable::parse(text, path)?;
    let col = |name: &str| table.require(name, path);
    let (cp, cs, ct, c1, c2, cw) = (col("particle")?, col("slice")?, col("T_kyr")?, col("x1")?, col("x2")?, col("weight")?);
    let mut out: Vec<PosteriorPath> = Vec::new();
    for row in 0..table.rows.len() {
        let at = |c: usize| table.f64_at(row, c, path);
        let particle = at(cp)? as usize;
        let slice = at(cs)? as usize;
        let weight = at(cw)?;
        if out.last().is_none_or(|p| p.particle != particle) {
            out.push(PosteriorPath {
                particle,
                weight,
                path: crate::smc::SamplePath { t: vec![], x1: vec![], x2: vec![] },
            });
        }
        let p = out.last_mut().unwrap();
        if slice != p.path.t.len() + 1 {
            let msg = format!("expected slice {}, found {slice}", p.path.t.len() + 1);
            return Err(Error::parse(path, table.lines[row], msg));
        }
        p.path.t.push(at(ct)?);
        p.path.x1.push(at(c1)?);
        p.path.x2.push(at(c2)?);
    }
    if let Some(first) = out.first() {
        if out.iter().any(|p| p.path.t.len() != first.path.t.len()) {
            return Err(Error::Consistency("chronology draws have differing slice counts".into()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, Streams};
    use crate::smc::SamplePath;
    use rand_distr::{Distribution, StandardNormal};

    fn path(t: Vec<f64>, weight: f64, particle: usize) -> PosteriorPath {
        let n = t.len();
        PosteriorPath { particle, weight, path: SamplePath { t, x1: vec![0.0; n], x2: vec![0.0; n] } }
    }

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Streams::new(seed).get(Purpose::Test, 0, 0, 0);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn gaussian_hdr_matches_quantiles() {
        let x = gaussian(100_000, 1);
        let w = vec![1.0; x.len()];
        let h = hdr(&x, &w, 0.95, &GridConfig::default()).unwrap();
        assert_eq!(h.intervals.len(), 1);
        let (lo, hi) = h.intervals[0];
        assert!((lo + 1.96).abs() < 0.05 && (hi - 1.96).abs() < 0.05, "{lo} {hi}");
    }

    #[test]
    fn bimodal_hdr_splits() {
        let mut x = gaussian(20_000, 2);
        for (i, v) in x.iter_mut().enumerate() {
            *v += if i % 2 == 0 { -6.0 } else { 6.0 };
        }
        let h = hdr(&x, &vec![1.0; x.len()], 0.95, &GridConfig::default()).unwrap();
        assert_eq!(h.intervals.len(), 2);
        assert!(h.intervals[0].1 < 0.0 && h.intervals[1].0 > 0.0);
        assert!(!h.contains(0.0));
    }

    #[test]
    fn unit_mass_is_the_sample_range() {
        let x = [0.3, -1.0, 2.5, 0.0];
        let h = hdr(&x, &[1.0, 1.0, 1.0, 0.0], 1.0, &GridConfig::default()).unwrap();
        assert_eq!(h.intervals, vec![(-1.0, 2.5)]);
    }

    #[test]
    fn identical_samples_give_a_point() {
        let h = hdr(&[3.0; 5], &[0.2; 5], 0.95, &GridConfig::default()).unwrap();
        assert!(h.degenerate);
        assert_eq!(h.intervals, vec![(3.0, 3.0)]);
    }

    #[test]
    fn hdr_is_no_wider_than_the_best_contiguous_window() {
        let mut x = gaussian(5_000, 3);
        for v in x.iter_mut() {
            *v = v.exp();
        }
        let w: Vec<f64> = (0..x.len()).map(|i| 1.0 + (i % 7) as f64).collect();
        let kde = weighted_kde(&x, &w, &GridConfig::default()).unwrap();
        let masses = kde.cell_masses();
        for mass in [0.5, 0.8, 0.95] {
            let (_, cells) = hdr_cells(&kde, mass);
            let covered: f64 = cells.iter().map(|&i| masses[i]).sum();
            assert!(covered >= mass - 1e-12);
            let mut best = usize::MAX;
            for i in 0..masses.len() {
                let mut acc = 0.0;
                for j in i..masses.len() {
                    acc += masses[j];
                    if acc >= mass {
                        best = best.min(j - i + 1);
                        break;
                    }
                }
            }
            assert!(cells.len() <= best, "{mass}: {} > {best}", cells.len());
        }
    }

    #[test]
    fn hdrs_nest() {
        let x = gaussian(3_000, 4);
        let w = vec![1.0; x.len()];
        let g = GridConfig::default();
        let inner = hdr(&x, &w, 0.5, &g).unwrap();
        let outer = hdr(&x, &w, 0.95, &g).unwrap();
        for &(lo, hi) in &inner.intervals {
            assert!(outer.contains(lo) && outer.contains(hi));
        }
    }

    #[test]
    fn age_sd_examples() {
        let same = vec![vec![-10.0, -5.0]; 3];
        assert_eq!(age_sd_profile(&same, &[1.0, 2.0, 3.0]).unwrap().per_slice, vec![0.0, 0.0]);
        let d = 1.5;
        let two = vec![vec![-10.0 - d, -5.0 - d], vec![-10.0 + d, -5.0 + d]];
        let p = age_sd_profile(&two, &[0.5, 0.5]).unwrap();
        for s in &p.per_slice {
            assert!((s - d).abs() < 1e-12);
        }
        assert!((p.mean - d).abs() < 1e-12);
    }

    #[test]
    fn age_sd_matches_direct_formula() {
        let mut rng = Streams::new(5).get(Purpose::Test, 0, 0, 0);
        let n = 40;
        let ch: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|_| -100.0 * rng.random::<f64>()).collect()).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let p = age_sd_profile(&ch, &w).unwrap();
        let sw: f64 = w.iter().sum();
        for m in 0..6 {
            let e1: f64 = ch.iter().zip(&w).map(|(c, w)| w * c[m]).sum::<f64>() / sw;
            let e2: f64 = ch.iter().zip(&w).map(|(c, w)| w * c[m] * c[m]).sum::<f64>() / sw;
            assert!((p.per_slice[m] - (e2 - e1 * e1).sqrt()).abs() < 1e-12 * 100.0);
        }
    }

    fn evidence(log_z: f64, model: ModelVariant, hash: &str) -> EvidenceEstimate {
        EvidenceEstimate {
            log_z,
            increments: vec![log_z],
            n_theta: 1,
            n_x: 1,
            seed: 0,
            rejuvenations: 0,
            acceptance_rates: vec![],
            model,
            record_hash: hash.into(),
            chronology_hash: None,
            mc_error: Some(0.3),
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn bayes_factor_examples() {
        let a = evidence(-100.0, ModelVariant::Forced, "h");
        let b = evidence(-110.0, ModelVariant::Unforced, "h");
        let ab = bayes_factor(&a, &b).unwrap();
        assert_eq!(ab.log_bf, 10.0);
        assert_eq!(ab.favours, Some(ModelVariant::Forced));
        assert_eq!(ab.band, EvidenceBand::VeryStrong);
        assert!((ab.mc_error.unwrap() - 0.3 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(bayes_factor(&b, &a).unwrap().log_bf, -10.0);
        let aa = bayes_factor(&a, &a).unwrap();
        assert_eq!(aa.log_bf, 0.0);
        assert_eq!(aa.favours, None);
        let c = evidence(-100.0, ModelVariant::Unforced, "other");
        assert!(matches!(bayes_factor(&a, &c), Err(Error::Consistency(_))));
        assert_eq!(EvidenceBand::from_log_bf(0.5), EvidenceBand::NotWorthMoreThanABareMention);
        assert_eq!(EvidenceBand::from_log_bf(-2.0), EvidenceBand::Positive);
        assert_eq!(EvidenceBand::from_log_bf(4.0), EvidenceBand::Strong);
    }

    #[test]
    fn single_path_is_always_drawn() {
        let paths = vec![path(vec![-3.0, -1.0], 1.0, 0)];
        let mut rng = Streams::new(0).get(Purpose::Test, 0, 0, 0);
        let draws = sample_chronologies(&paths, 1, &mut rng).unwrap();
        assert_eq!(draws[0].1.times, vec![-3.0, -1.0]);
        assert!(sample_chronologies(&paths, 0, &mut rng).is_err());
    }

    #[test]
    fn draw_frequencies_follow_weights() {
        let w = [0.1, 0.0, 0.45, 0.25, 0.2];
        let paths: Vec<_> = w.iter().enumerate().map(|(i, &wi)| path(vec![-10.0 - i as f64, -1.0], wi, i)).collect();
        let mut rng = Streams::new(9).get(Purpose::Test, 0, 0, 0);
        let n = 100_000;
        let mut counts = [0usize; 5];
        for (i, ch) in sample_chronologies(&paths, n, &mut rng).unwrap() {
            assert_eq!(ch.times, paths[i].path.t);
            counts[i] += 1;
        }
        for i in 0..5 {
            let p = w[i];
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let f = counts[i] as f64 / n as f64;
            assert!((f - p).abs() <= 4.0 * se + 1e-12, "{i}: {f}");
        }
    }

    #[test]
    fn chronology_csv_round_trips() {
        let paths = vec![path(vec![-3.0, -1.0], 0.25, 0), path(vec![-4.0, -2.5], 0.75, 3)];
        let text = chronology_csv(&paths);
        assert!(text.starts_with("particle,slice,T_kyr,x1,x2,weight\n"));
        let back = parse_chronology_csv(&text, std::path::Path::new("c.csv")).unwrap();
        assert_eq!(back, paths);
    }

    #[test]
    fn replicate_error() {
        assert_eq!(replicate_mc_error(&[1.0]), None);
        assert!((replicate_mc_error(&[1.0, 3.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}
