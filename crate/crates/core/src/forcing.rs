//! Astronomical forcing.
//!
//! Climatic precession `e sin ϖ`, coprecession `e cos ϖ` and obliquity are
//! evaluated from trigonometric expansions of the orbital elements, normalised
//! to zero mean and unit standard deviation over a reference window, and
//! combined linearly into the scalar forcing
//! `F(t; γ) = γ_P Π_P(t) + γ_C Π_C(t) + γ_E E(t)`.
//!
//! Time is in kyr with the present at `t = 0` and the past negative.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default validity window of the orbital expansions, in kyr.
pub const VALIDITY_WINDOW: (f64, f64) = (-1000.0, 0.0);

const BERGER_1978: &str = include_str!("../data/berger1978.txt");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalTerm {
    pub amplitude: f64,
    /// rad/kyr
    pub angular_frequency: f64,
    /// rad
    pub phase: f64,
}

impl OrbitalTerm {
    pub fn new(amplitude: f64, angular_frequency: f64, phase: f64) -> Self {
        Self { amplitude, angular_frequency, phase }
    }

    #[inline]
    fn arg(&self, t: f64) -> f64 {
        self.angular_frequency * t + self.phase
    }
}

/// Truncated trigonometric expansions of eccentricity, precession and
/// obliquity.
///
/// * `e sin Π = Σ M sin(g t + β)` and `e cos Π = Σ M cos(g t + β)` over
///   `eccentricity_terms`,
/// * `ψ = k (rate t + ψ₀) + Σ F sin(f t + δ)` over `precession_terms`, with the
///   linear part held in `precession_drift` as `(k, rate, ψ₀)`,
/// * `ε = ε₀ + Σ A cos(f t + δ)` over `obliquity_terms`,
///
/// and the longitude of perihelion is `ϖ = Π + ψ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitalSeries {
    pub precession_terms: Vec<OrbitalTerm>,
    pub obliquity_terms: Vec<OrbitalTerm>,
    pub eccentricity_terms: Vec<OrbitalTerm>,
    pub obliquity_mean: f64,
    pub precession_drift: OrbitalTerm,
    pub window: (f64, f64),
}

/// Raw (unnormalised) orbital quantities at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalValues {
    pub e_sin_w: f64,
    pub e_cos_w: f64,
    pub obliquity: f64,
}

impl OrbitalValues {
    fn as_array(&self) -> [f64; 3] {
        [self.e_sin_w, self.e_cos_w, self.obliquity]
    }
}

impl OrbitalSeries {
    pub fn new(
        precession_terms: Vec<OrbitalTerm>,
        obliquity_terms: Vec<OrbitalTerm>,
        eccentricity_terms: Vec<OrbitalTerm>,
        obliquity_mean: f64,
        precession_drift: OrbitalTerm,
    ) -> Result<Self> {
        let series = Self {
            precession_terms,
            obliquity_terms,
            eccentricity_terms,
            obliquity_mean,
            precession_drift,
            window: VALIDITY_WINDOW,
        };
        series.validate()?;
        Ok(series)
    }

    /// The packaged Berger (1978) expansion, optionally truncated to the
    /// `terms` largest-amplitude terms of each component.
    pub fn berger1978(terms: Option<usize>) -> Result<Self> {
        let series = Self::parse(BERGER_1978, Path::new("<builtin berger1978>"))?;
        Ok(match terms {
            Some(n) => series.truncated(n)?,
            None => series,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses the `component amplitude frequency phase` coefficient format.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut precession = Vec::new();
        let mut obliquity = Vec::new();
        let mut eccentricity = Vec::new();
        let mut obliquity_mean = None;
        let mut drift = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::parse(origin, i + 1, "expected `component amplitude frequency phase`"));
            }
            let mut nums = [0.0; 3];
            for (k, f) in fields[1..].iter().enumerate() {
                nums[k] = f
                    .parse::<f64>()
                    .map_err(|_| Error::parse(origin, i + 1, format!("not a number: {f}")))?;
            }
            let term = OrbitalTerm::new(nums[0], nums[1], nums[2]);
            match fields[0] {
                "precession" => precession.push(term),
                "obliquity" => obliquity.push(term),
                "eccentricity" => eccentricity.push(term),
                "obliquity_mean" => obliquity_mean = Some(term.amplitude),
                "precession_drift" => drift = Some(term),
                other => {
                    return Err(Error::parse(origin, i + 1, format!("unknown component `{other}`")));
                }
            }
        }
        Self::new(
            precession,
            obliquity,
            eccentricity,
            obliquity_mean.unwrap_or(0.0),
            drift.unwrap_or(OrbitalTerm::new(0.0, 0.0, 0.0)),
        )
        .map_err(|e| match e {
            Error::Parameter(msg) => Error::parse(origin, 0, msg),
            other => other,
        })
    }

    fn validate(&self) -> Result<()> {
        for (name, terms) in [
            ("precession", &self.precession_terms),
            ("obliquity", &self.obliquity_terms),
            ("eccentricity", &self.eccentricity_terms),
        ] {
            if terms.is_empty() {
                return Err(Error::Parameter(format!("{name} term list is empty")));
            }
            for t in terms {
                if !(t.angular_frequency.is_finite() && t.angular_frequency >= 0.0) {
                    return Err(Error::Parameter(format!(
                        "{name} angular frequency must be finite and non-negative, got {}",
                        t.angular_frequency
                    )));
                }
                if !(t.amplitude.is_finite() && t.phase.is_finite()) {
                    return Err(Error::Parameter(format!("{name} term is not finite")));
                }
            }
        }
        if !(self.obliquity_mean.is_finite()
            && self.precession_drift.amplitude.is_finite()
            && self.precession_drift.angular_frequency.is_finite()
            && self.precession_drift.phase.is_finite())
        {
            return Err(Error::Parameter("series constants must be finite".into()));
        }
        Ok(())
    }

    /// Keeps the `n` largest-amplitude terms of each component.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("orbital term count must be at least 1".into()));
        }
        let keep = |terms: &[OrbitalTerm]| {
            let mut v = terms.to_vec();
            v.sort_by(|a, b| b.amplitude.abs().total_cmp(&a.amplitude.abs()));
            v.truncate(n);
            v
        };
        Ok(Self {
            precession_terms: keep(&self.precession_terms),
            obliquity_terms: keep(&self.obliquity_terms),
            eccentricity_terms: keep(&self.eccentricity_terms),
            ..self.clone()
        })
    }

    fn evaluate(&self, t: f64) -> OrbitalValues {
        let (mut es, mut ec) = (0.0, 0.0);
        for term in &self.eccentricity_terms {
            let (s, c) = term.arg(t).sin_cos();
            es += term.amplitude * s;
            ec += term.amplitude * c;
        }
        let d = &self.precession_drift;
        let mut psi = d.amplitude * (d.angular_frequency * t + d.phase);
        for term in &self.precession_terms {
            psi += term.amplitude * term.arg(t).sin();
        }
        let mut eps = self.obliquity_mean;
        for term in &self.obliquity_terms {
            eps += term.amplitude * term.arg(t).cos();
        }
        let (sp, cp) = psi.sin_cos();
        OrbitalValues {
            e_sin_w: es * cp + ec * sp,
            e_cos_w: ec * cp - es * sp,
            obliquity: eps,
        }
    }
}

/// Evaluates the raw orbital quantities at `t` kyr.
pub fn raw_orbital(t: f64, series: &OrbitalSeries) -> Result<OrbitalValues> {
    check_window(t, series.window)?;
    Ok(series.evaluate(t))
}

fn check_window(t: f64, (start, end): (f64, f64)) -> Result<()> {
    if t.is_finite() && t >= start && t <= end {
        Ok(())
    } else {
        Err(Error::Domain { t, start, end })
    }
}

/// A user-supplied table of `(t, Π_P, Π_C, E)` rows, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedOrbital {
    times: Vec<f64>,
    values: Vec<[f64; 3]>,
}

impl TabulatedOrbital {
    pub fn new(times: Vec<f64>, values: Vec<[f64; 3]>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::Config("tabulated forcing needs at least two rows".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Ordering("tabulated forcing times must be strictly increasing".into()));
        }
        Ok(Self { times, values })
    }

    /// Reads a CSV with header `t_kyr,prec,coprec,obliquity`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty file"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["t_kyr", "prec", "coprec", "obliquity"] {
            return Err(Error::parse(path, hline + 1, "header must be `t_kyr,prec,coprec,obliquity`"));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::parse(path, i + 1, "expected 4 columns"));
            }
            let mut row = [0.0; 4];
            for (k, f) in fields.iter().enumerate() {
                row[k] = f
                    .parse()
                    .map_err(|_| Error::parse(path, i + 1, format!("not a number: {f}")))?;
            }
            if let Some(&last) = times.last() {
                if !(row[0] > last) {
                    return Err(Error::parse(path, i + 1, "t_kyr must be strictly increasing"));
                }
            }
            times.push(row[0]);
            values.push([row[1], row[2], row[3]]);
        }
        Self::new(times, values).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    fn window(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    fn evaluate(&self, t: f64) -> [f64; 3] {
        let idx = self.times.partition_point(|&x| x <= t);
        if idx == 0 {
            return self.values[0];
        }
        if idx >= self.times.len() {
            return *self.values.last().unwrap();
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.values[idx - 1], self.values[idx]);
        [0, 1, 2].map(|k| a[k] + w * (b[k] - a[k]))
    }
}

/// Where raw orbital quantities come from.
#[derive(Debug, Clone, PartialEq)]
pub enum OrbitalSource {
    Series(OrbitalSeries),
    Table(TabulatedOrbital),
}

impl OrbitalSource {
    pub fn window(&self) -> (f64, f64) {
        match self {
            OrbitalSource::Series(s) => s.window,
            OrbitalSource::Table(t) => t.window(),
        }
    }

    pub fn raw(&self, t: f64) -> Result<[f64; 3]> {
        check_window(t, self.window())?;
        Ok(match self {
            OrbitalSource::Series(s) => s.evaluate(t).as_array(),
            OrbitalSource::Table(tab) => tab.evaluate(t),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConstants {
    pub mean_p: f64,
    pub sd_p: f64,
    pub mean_c: f64,
    pub sd_c: f64,
    pub mean_e: f64,
    pub sd_e: f64,
    pub window: (f64, f64),
    pub sample_step: f64,
}

impl NormalizationConstants {
    #[inline]
    pub fn apply(&self, raw: [f64; 3]) -> [f64; 3] {
        [
            (raw[0] - self.mean_p) / self.sd_p,
            (raw[1] - self.mean_c) / self.sd_c,
            (raw[2] - self.mean_e) / self.sd_e,
        ]
    }
}

/// Grid `start, start + step, ...` up to and including `end` (to rounding).
fn window_grid(window: (f64, f64), step: f64) -> Vec<f64> {
    let n = ((window.1 - window.0) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|k| window.0 + k as f64 * step).collect()
}

/// Population mean and standard deviation of each component over the window
/// grid.
pub fn normalize_series(
    source: &OrbitalSource,
    window: (f64, f64),
    step: f64,
) -> Result<NormalizationConstants> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("normalisation step must be positive, got {step}")));
    }
    if !(window.0 < window.1 && window.1 <= 0.0) {
        return Err(Error::Config(format!(
            "normalisation window must satisfy start < end <= 0, got [{}, {}]",
            window.0, window.1
        )));
    }
    let grid = window_grid(window, step);
    if grid.len() < 2 {
        return Err(Error::Config("normalisation grid has fewer than 2 points".into()));
    }
    let samples = grid.iter().map(|&t| source.raw(t)).collect::<Result<Vec<_>>>()?;
    let n = samples.len() as f64;
    let mut mean = [0.0; 3];
    let mut sd = [0.0; 3];
    for k in 0..3 {
        mean[k] = samples.iter().map(|s| s[k]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[k] - mean[k]).powi(2)).sum::<f64>() / n;
        sd[k] = var.sqrt();
        // A constant component has sd of pure rounding noise.
        if !(sd[k] > 1e-12 * mean[k].abs().max(1e-300)) {
            return Err(Error::Config(format!(
                "orbital component {} is constant over the normalisation window",
                ["precession", "coprecession", "obliquity"][k]
            )));
        }
    }
    Ok(NormalizationConstants {
        mean_p: mean[0],
        sd_p: sd[0],
        mean_c: mean[1],
        sd_c: sd[1],
        mean_e: mean[2],
        sd_e: sd[2],
        window,
        sample_step: step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForcingWeights {
    pub gamma_p: f64,
    pub gamma_c: f64,
    pub gamma_e: f64,
}

impl ForcingWeights {
    pub const ZERO: ForcingWeights = ForcingWeights { gamma_p: 0.0, gamma_c: 0.0, gamma_e: 0.0 };

    pub fn new(gamma_p: f64, gamma_c: f64, gamma_e: f64) -> Self {
        Self { gamma_p, gamma_c, gamma_e }
    }

    pub fn is_zero(&self) -> bool {
        self.gamma_p == 0.0 && self.gamma_c == 0.0 && self.gamma_e == 0.0
    }

    #[inline]
    pub fn combine(&self, normalized: [f64; 3]) -> f64 {
        self.gamma_p * normalized[0] + self.gamma_c * normalized[1] + self.gamma_e * normalized[2]
    }
}

/// `F(t; γ)` evaluated directly from the source.
pub fn forcing(
    t: f64,
    weights: &ForcingWeights,
    source: &OrbitalSource,
    constants: &NormalizationConstants,
) -> Result<f64> {
    Ok(weights.combine(constants.apply(source.raw(t)?)))
}

/// Normalised components precomputed on a regular grid and interpolated
/// linearly. Used inside the SDE integrator.
#[derive(Debug, Clone)]
pub struct ForcingGrid {
    start: f64,
    step: f64,
    values: Vec<[f64; 3]>,
}

impl ForcingGrid {
    pub fn build(source: &OrbitalSource, constants: &NormalizationConstants, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::Config(format!("forcing grid step must be positive, got {step}")));
        }
        let window = source.window();
        let mut times = window_grid(window, step);
        // Close the grid on the window end so every in-window time is covered.
        if window.1 - times.last().unwrap() > 1e-9 * step {
            times.push(times.last().unwrap() + step);
        }
        let values = times
            .iter()
            .map(|&t| source.raw(t.min(window.1)).map(|r| constants.apply(r)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { start: window.0, step, values })
    }

    pub fn window(&self) -> (f64, f64) {
        (self.start, self.start + (self.values.len() - 1) as f64 * self.step)
    }

    /// Interpolated normalised components; `None` outside the grid.
    #[inline]
    pub fn components(&self, t: f64) -> Option<[f64; 3]> {
        let x = (t - self.start) / self.step;
        if !(x >= 0.0) {
            return None;
        }
        let i = x as usize;
        let last = self.values.len() - 1;
        if i >= last {
            return if x <= last as f64 + 1e-9 { Some(self.values[last]) } else { None };
        }
        let w = x - i as f64;
        let (a, b) = (&self.values[i], &self.values[i + 1]);
        Some([
            a[0] + w * (b[0] - a[0]),
            a[1] + w * (b[1] - a[1]),
            a[2] + w * (b[2] - a[2]),
        ])
    }

    #[inline]
    pub fn eval(&self, t: f64, weights: &ForcingWeights) -> Option<f64> {
        self.components(t).map(|c| weights.combine(c))
    }
}

/// Orbital source together with its normalisation and the integration grid.
#[derive(Debug, Clone)]
pub struct OrbitalForcing {
    source: OrbitalSource,
    constants: NormalizationConstants,
    grid: ForcingGrid,
}

impl OrbitalForcing {
    pub fn new(source: OrbitalSource, window: (f64, f64), step: f64, grid_step: f64) -> Result<Self> {
        let constants = normalize_series(&source, window, step)?;
        let grid = ForcingGrid::build(&source, &constants, grid_step)?;
        Ok(Self { source, constants, grid })
    }

    /// Full Berger (1978) expansion normalised over `[-1000, 0]` kyr at 1 kyr.
    pub fn default_berger(grid_step: f64) -> Result<Self> {
        Self::new(OrbitalSource::Series(OrbitalSeries::berger1978(None)?), VALIDITY_WINDOW, 1.0, grid_step)
    }

    pub fn source(&self) -> &OrbitalSource {
        &self.source
    }

    pub fn constants(&self) -> &NormalizationConstants {
        &self.constants
    }

    pub fn grid(&self) -> &ForcingGrid {
        &self.grid
    }

    pub fn forcing(&self, t: f64, weights: &ForcingWeights) -> Result<f64> {
        forcing(t, weights, &self.source, &self.constants)
    }

    pub fn normalized(&self, t: f64) -> Result<[f64; 3]> {
        Ok(self.constants.apply(self.source.raw(t)?))
    }
}
