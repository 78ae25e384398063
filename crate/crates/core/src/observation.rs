//! Measurement model and core-file ingestion.
//!
//! A core file is a CSV with header `depth_m,d18O`. Lines starting with `#`
//! are comments, except `#tiepoint depth_m age_kyr sd_kyr` (an independently
//! dated horizon) and `#name <label>`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Depth tolerance when matching a tie point to a slice, in metres.
pub const TIE_DEPTH_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    /// δ¹⁸O offset D (permil)
    pub d: f64,
    /// δ¹⁸O per unit ice volume C (permil)
    pub c: f64,
    /// measurement sd (permil)
    pub sigma_y: f64,
}

impl CalibrationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.c.is_finite()) {
            return Err(Error::Parameter("calibration parameters must be finite".into()));
        }
        if !(self.sigma_y > 0.0 && self.sigma_y.is_finite()) {
            return Err(Error::Parameter(format!("sigma_y must be positive, got {}", self.sigma_y)));
        }
        Ok(())
    }

    #[inline]
    pub fn mean(&self, x1: f64) -> f64 {
        self.d + self.c * x1
    }
}

#[inline]
fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// `ln N(y; D + C x1, σ_y²)`.
#[inline]
pub fn obs_loglik(y: f64, x1: f64, calib: &CalibrationParams) -> f64 {
    normal_logpdf(y, calib.mean(x1), calib.sigma_y)
}

/// Gaussian log-density of the age `-t` around `age_mean`.
#[inline]
pub fn tiepoint_loglik(t: f64, age_mean: f64, age_sd: f64) -> f64 {
    normal_logpdf(-t, age_mean, age_sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub depth_m: f64,
    pub d18o: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiePoint {
    /// Zero-based slice index (0 = deepest).
    pub slice: usize,
    /// kyr before present
    pub age_mean: f64,
    pub age_sd: f64,
}

/// Observations ordered deepest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreRecord {
    pub name: String,
    pub slices: Vec<Slice>,
    pub tie_points: Vec<TiePoint>,
}

impl CoreRecord {
    pub fn new(name: impl Into<String>, slices: Vec<Slice>, mut tie_points: Vec<TiePoint>) -> Result<Self> {
        tie_points.sort_by_key(|t| t.slice);
        let record = Self { name: name.into(), slices, tie_points };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if self.slices.is_empty() {
            return Err(Error::Consistency("core has no observations".into()));
        }
        for s in &self.slices {
            if !(s.depth_m.is_finite() && s.d18o.is_finite()) {
                return Err(Error::Consistency("core values must be finite".into()));
            }
            if !(s.depth_m > 0.0) {
                return Err(Error::Consistency(format!("depths must be positive, got {}", s.depth_m)));
            }
        }
        if self.slices.windows(2).any(|w| !(w[1].depth_m < w[0].depth_m)) {
            return Err(Error::Ordering("depths must be strictly decreasing with slice index".into()));
        }
        for (i, tp) in self.tie_points.iter().enumerate() {
            if tp.slice >= self.slices.len() {
                return Err(Error::Consistency(format!("tie point refers to missing slice {}", tp.slice)));
            }
            if !(tp.age_sd > 0.0 && tp.age_sd.is_finite() && tp.age_mean.is_finite()) {
                return Err(Error::Consistency(format!("tie point sd must be positive, got {}", tp.age_sd)));
            }
            if i > 0 && self.tie_points[i - 1].slice == tp.slice {
                return Err(Error::Consistency(format!("two tie points on slice {}", tp.slice)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn depths(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.depth_m).collect()
    }

    pub fn observations(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.d18o).collect()
    }

    pub fn tie_point(&self, slice: usize) -> Option<&TiePoint> {
        self.tie_points.iter().find(|t| t.slice == slice)
    }

    /// Keeps only the first `m` (deepest) slices.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        let m = m.min(self.len());
        Self::new(
            self.name.clone(),
            self.slices[..m].to_vec(),
            self.tie_points.iter().copied().filter(|t| t.slice < m).collect(),
        )
    }

    /// Canonical text form; [`load_core`] parses it back to an identical
    /// record.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "#name {}", self.name).unwrap();
        for tp in &self.tie_points {
            writeln!(out, "#tiepoint {} {} {}", self.slices[tp.slice].depth_m, tp.age_mean, tp.age_sd).unwrap();
        }
        out.push_str("depth_m,d18O\n");
        for s in &self.slices {
            writeln!(out, "{},{}", s.depth_m, s.d18o).unwrap();
        }
        out
    }

    /// SHA-256 of the canonical text form.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Drop slices deeper than the deepest tie point, so the record starts at
    /// a dated horizon.
    pub trim_below_deepest_tie: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { trim_below_deepest_tie: true }
    }
}

pub fn load_core(path: &Path) -> Result<CoreRecord> {
    load_core_with(path, &LoadOptions::default())
}

pub fn load_core_with(path: &Path, options: &LoadOptions) -> Result<CoreRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let default_name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_core(&text, path, &default_name, options)
}

pub fn write_core(record: &CoreRecord, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, record.to_csv().as_bytes())
}

fn parse_number(field: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("not a number: `{}`", field.trim())))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(path, line, format!("non-finite value `{}`", field.trim())))
    }
}

pub fn parse_core(text: &str, path: &Path, default_name: &str, options: &LoadOptions) -> Result<CoreRecord> {
    let mut name = default_name.to_string();
    let mut ties: Vec<(usize, f64, f64, f64)> = Vec::new();
    let mut header_seen = false;
    let mut rows: Vec<(usize, Slice)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim().trim_start_matches('\u{feff}');
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim_start();
            if let Some(args) = rest.strip_prefix("tiepoint") {
                let f: Vec<&str> = args.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(Error::parse(path, lineno, "expected `#tiepoint depth_m age_kyr sd_kyr`"));
                }
                let depth = parse_number(f[0], path, lineno)?;
                let age = parse_number(f[1], path, lineno)?;
                let sd = parse_number(f[2], path, lineno)?;
                if !(sd > 0.0) {
                    return Err(Error::parse(path, lineno, "tie point sd must be positive"));
                }
                ties.push((lineno, depth, age, sd));
            } else if let Some(n) = rest.strip_prefix("name") {
                if n.starts_with(char::is_whitespace) {
                    name = n.trim().to_string();
                }
            }
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 2 || cols[0] != "depth_m" || cols[1] != "d18O" {
                return Err(Error::parse(path, lineno, "missing header `depth_m,d18O`"));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::parse(path, lineno, "expected columns depth_m,d18O"));
        }
        let depth = parse_number(fields[0], path, lineno)?;
        let d18o = parse_number(fields[1], path, lineno)?;
        if !(depth > 0.0) {
            return Err(Error::parse(path, lineno, format!("depth must be positive, got {depth}")));
        }
        rows.push((lineno, Slice { depth_m: depth, d18o }));
    }
    if !header_seen {
        return Err(Error::parse(path, text.lines().count().max(1), "missing header `depth_m,d18O`"));
    }
    if rows.is_empty() {
        return Err(Error::parse(path, text.lines().count().max(1), "no data rows"));
    }

    let shallow_first = rows.len() > 1 && rows[0].1.depth_m < rows[rows.len() - 1].1.depth_m;
    let sorted_deepest_first = rows.windows(2).all(|w| w[0].1.depth_m > w[1].1.depth_m);
    let mut by_depth = rows.clone();
    by_depth.sort_by(|a, b| b.1.depth_m.total_cmp(&a.1.depth_m).then(a.0.cmp(&b.0)));
    if let Some(w) = by_depth.windows(2).find(|w| w[0].1.depth_m == w[1].1.depth_m) {
        return Err(Error::parse(path, w[0].0.max(w[1].0), format!("duplicate depth {}", w[0].1.depth_m)));
    }
    if !sorted_deepest_first {
        if shallow_first {
            log::info!("{}: depths supplied shallow-first; reordered deepest-first", path.display());
        } else {
            log::info!("{}: depths not monotone; sorted deepest-first", path.display());
        }
    }
    let mut slices: Vec<Slice> = by_depth.into_iter().map(|(_, s)| s).collect();

    if options.trim_below_deepest_tie {
        if let Some(deepest) = ties.iter().map(|t| t.1).reduce(f64::max) {
            let before = slices.len();
            slices.retain(|s| s.depth_m <= deepest + TIE_DEPTH_TOLERANCE);
            if slices.len() < before {
                log::info!(
                    "{}: dropped {} slices deeper than the deepest tie point at {deepest} m",
                    path.display(),
                    before - slices.len()
                );
            }
        }
    }

    let mut tie_points = Vec::with_capacity(ties.len());
    for (lineno, depth, age, sd) in ties {
        let slice = slices
            .iter()
            .position(|s| (s.depth_m - depth).abs() <= TIE_DEPTH_TOLERANCE)
            .ok_or_else(|| Error::parse(path, lineno, format!("tie point depth {depth} m matches no observation")))?;
        tie_points.push(TiePoint { slice, age_mean: age, age_sd: sd });
    }
    CoreRecord::new(name, slices, tie_points).map_err(|e| Error::parse(path, 0, e.to_string()))
}
