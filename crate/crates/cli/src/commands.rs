use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use paleojoint_core::archive::Chronology;
use paleojoint_core::config::{truth_toml, RunConfig};
use paleojoint_core::io::fmt_f64;
use paleojoint_core::observation::{load_core_with, CoreRecord};
use paleojoint_core::params::ModelVariant;
use paleojoint_core::rng::{Purpose, Streams};
use paleojoint_core::simulate::simulate_core;
use paleojoint_core::smc::{
    chronology_hash, fixed_chronology_run, smc2_run, AgeModel, EvidenceEstimate, RunOutput, Smc2,
};
use paleojoint_core::summary::{
    bayes_factor, chronology_csv, hdr_csv, parse_chronology_csv, path_age_sd_profile, posterior_csv,
    replicate_mc_error, sample_chronologies, slice_hdrs,
};
use paleojoint_core::{Error, Result};
use serde::Serialize;

use crate::manifest::Recorder;
use crate::Common;

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            Error::Io { path, source } => Error::Config(format!("cannot read config {}: {source}", path.display())),
            other => other,
        }),
        None => Ok(RunConfig::default()),
    }
}

fn out_dir(flag: Option<&PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = flag
        .or(cfg.io.out.as_ref())
        .cloned()
        .ok_or_else(|| Error::Config("no output directory: pass --out or set io.out".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn core_path(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.io.core.clone())
        .ok_or_else(|| Error::Config("no core file: pass it as an argument or set io.core".into()))
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

pub fn simulate(common: &Common) -> Result<()> {
    let config_path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("simulate needs --config (an empty file uses every default)".into()))?;
    let mut cfg = load_config(Some(config_path))?;
    if let Some(seed) = common.seed {
        cfg.simulation.seed = seed;
    }
    let out = out_dir(common.out.as_ref(), &cfg)?;
    let mut rec = Recorder::new("simulate", &out, Some(config_path), Some(&cfg));
    rec.input(config_path)?;
    rec.seed(cfg.simulation.seed, None);

    let sim = cfg.simulation()?;
    let forcing = cfg.forcing()?;
    let (record, truth) = simulate_core(&sim, &forcing)?;
    rec.write("core.csv", record.to_csv().as_bytes())?;
    rec.write("truth.csv", truth.to_csv().as_bytes())?;
    rec.write("truth_params.toml", truth_toml(&truth.params).as_bytes())?;
    log::info!("simulated {} slices, deepest age {:.1} kyr", record.len(), -truth.chronology.times[0]);
    rec.finish()?;
    Ok(())
}

fn load_record(path: &Path, cfg: &RunConfig, rec: &mut Recorder) -> Result<CoreRecord> {
    rec.input(path)?;
    load_core_with(path, &cfg.load_options())
}

fn apply_overrides(cfg: &mut RunConfig, common: &Common) {
    if let Some(seed) = common.seed {
        cfg.smc.seed = seed;
    }
    if let Some(w) = common.workers {
        cfg.smc.workers = w;
    }
}

/// Runs `mc_replicates` extra seeds without path sampling and returns the
/// sample sd of all `log_Z` values including `main`.
fn replicate_error(
    cfg: &RunConfig,
    main: f64,
    run: &dyn Fn(u64) -> Result<f64>,
) -> Result<Option<f64>> {
    if cfg.summary.mc_replicates == 0 {
        return Ok(None);
    }
    let mut zs = vec![main];
    for r in 1..=cfg.summary.mc_replicates as u64 {
        let z = run(cfg.smc.seed.wrapping_add(r))?;
        log::info!("replicate {r}: log_Z {z:.4}");
        zs.push(z);
    }
    Ok(replicate_mc_error(&zs))
}

pub fn infer(core: Option<PathBuf>, model: Option<ModelVariant>, common: &Common) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    apply_overrides(&mut cfg, common);
    if let Some(m) = model {
        cfg.model.variant = m;
    }
    let out = out_dir(common.out.as_ref(), &cfg)?;
    let mut rec = Recorder::new("infer", &out, common.config.as_deref(), Some(&cfg));
    if let Some(p) = &common.config {
        rec.input(p)?;
    }
    rec.seed(cfg.smc.seed, Some(cfg.smc.workers));
    let record = load_record(&core_path(core, &cfg)?, &cfg, &mut rec)?;
    let ctx = cfg.context(record, cfg.forcing()?, AgeModel::Joint)?;
    let prior = cfg.prior()?;
    let variant = cfg.model.variant;
    log::info!(
        "{variant} model on {} slices: n_theta {} n_x {}",
        ctx.slices(),
        cfg.smc.n_theta,
        cfg.smc.n_x
    );

    let log_path = out.join("progress.log");
    let mut progress_file =
        std::fs::File::create(&log_path).map_err(|e| Error::Config(format!("cannot create {}: {e}", log_path.display())))?;
    let _ = writeln!(progress_file, "slice\tess\tlog_z\trejuvenated\tacceptance");
    let smc = Smc2::new(&ctx, &prior, variant, cfg.smc.clone())?;
    let mut output = smc.run_with_progress(&mut |p| {
        let acc = p.acceptance.map_or_else(|| "-".to_string(), |a| format!("{a:.3}"));
        let _ = writeln!(progress_file, "{}\t{:.2}\t{:.6}\t{}\t{acc}", p.slice, p.ess, p.log_z, p.rejuvenated);
        let _ = progress_file.flush();
        log::debug!("slice {} ess {:.1} log_Z {:.4}", p.slice, p.ess, p.log_z);
    })?;
    output.evidence.mc_error = replicate_error(&cfg, output.evidence.log_z, &|seed| {
        let mut c = cfg.smc.clone();
        c.seed = seed;
        c.sample_paths = false;
        Ok(smc2_run(&ctx, &prior, variant, &c)?.evidence.log_z)
    })?;
    log::info!("log_Z {:.4} after {} rejuvenations", output.evidence.log_z, output.evidence.rejuvenations);

    write_run(&mut rec, &output, &cfg)?;
    rec.record_output(&log_path);
    rec.finish()?;
    Ok(())
}

fn write_run(rec: &mut Recorder, output: &RunOutput, cfg: &RunConfig) -> Result<()> {
    rec.write("posterior.csv", posterior_csv(output).as_bytes())?;
    rec.write("evidence.json", &json(&output.evidence)?)?;
    if !output.paths.is_empty() {
        rec.write("chronology.csv", chronology_csv(&output.paths).as_bytes())?;
        let hdrs = slice_hdrs(&output.paths, cfg.summary.hdr_mass, &cfg.summary.grid)?;
        rec.write("hdr.csv", hdr_csv(&hdrs).as_bytes())?;
        rec.write("age_sd.json", &json(&path_age_sd_profile(&output.paths)?)?)?;
    }
    Ok(())
}

pub fn compare(a: &Path, b: &Path, out: Option<PathBuf>) -> Result<()> {
    let read = |p: &Path| -> Result<EvidenceEstimate> {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Ok(serde_json::from_str(&text)?)
    };
    let (ea, eb) = (read(a)?, read(b)?);
    let bf = bayes_factor(&ea, &eb)?;
    let body = json(&bf)?;
    std::io::stdout().write_all(&body).map_err(|e| Error::io("<stdout>", e))?;
    if let Some(out) = out {
        let cfg = RunConfig::default();
        let dir = out_dir(Some(&out), &cfg)?;
        let mut rec = Recorder::new("compare", &dir, None, None);
        rec.input(a)?;
        rec.input(b)?;
        rec.write("bayes_factor.json", &body)?;
        rec.finish()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    draw: usize,
    source_particle: usize,
    chronology_hash: String,
    log_z_forced: f64,
    log_z_unforced: f64,
    log_bf: f64,
    mc_error_forced: Option<f64>,
    mc_error_unforced: Option<f64>,
}

pub fn ablation(core: Option<PathBuf>, posterior: &Path, k: Option<usize>, common: &Common) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    apply_overrides(&mut cfg, common);
    let k = k.unwrap_or(cfg.summary.ablation_draws);
    if k < 2 {
        return Err(Error::Config(format!("ablation needs at least 2 chronology draws, got {k}")));
    }
    let out = out_dir(common.out.as_ref(), &cfg)?;
    let mut rec = Recorder::new("ablation", &out, common.config.as_deref(), Some(&cfg));
    if let Some(p) = &common.config {
        rec.input(p)?;
    }
    rec.seed(cfg.smc.seed, Some(cfg.smc.workers));
    let record = load_record(&core_path(core, &cfg)?, &cfg, &mut rec)?;
    rec.input(posterior)?;
    let text = std::fs::read_to_string(posterior).map_err(|e| Error::io(posterior, e))?;
    let paths = parse_chronology_csv(&text, posterior)?;
    let forcing = cfg.forcing()?;
    let base = cfg.context(record, forcing, AgeModel::Joint)?;
    if paths.first().is_some_and(|p| p.path.t.len() != base.slices()) {
        return Err(Error::Consistency(format!(
            "posterior chronologies have {} slices but the core has {}",
            paths[0].path.t.len(),
            base.slices()
        )));
    }
    let prior = cfg.prior()?;
    let mut rng = Streams::new(cfg.smc.seed).get(Purpose::Summary, 0, 0, 0);
    let draws = sample_chronologies(&paths, k, &mut rng)?;

    let mut smc = cfg.smc.clone();
    smc.sample_paths = false;
    let evidence = |ch: &Chronology, variant: ModelVariant| -> Result<(f64, Option<f64>)> {
        let z = fixed_chronology_run(&base, ch, &prior, variant, &smc)?.evidence.log_z;
        let err = replicate_error(&cfg, z, &|seed| {
            let mut c = smc.clone();
            c.seed = seed;
            Ok(fixed_chronology_run(&base, ch, &prior, variant, &c)?.evidence.log_z)
        })?;
        Ok((z, err))
    };

    let mut rows = Vec::with_capacity(k);
    let mut table = String::from("draw,log_Z_forced,log_Z_unforced,log_bf\n");
    let mut chron = String::from("draw,slice,T_kyr\n");
    for (d, (src, ch)) in draws.iter().enumerate() {
        let (zf, ef) = evidence(ch, ModelVariant::Forced)?;
        let (zu, eu) = evidence(ch, ModelVariant::Unforced)?;
        log::info!("draw {}: log_Z forced {zf:.4} unforced {zu:.4} log_bf {:.4}", d + 1, zf - zu);
        writeln!(table, "{},{},{},{}", d + 1, fmt_f64(zf), fmt_f64(zu), fmt_f64(zf - zu)).unwrap();
        for (m, t) in ch.times.iter().enumerate() {
            writeln!(chron, "{},{},{}", d + 1, m + 1, fmt_f64(*t)).unwrap();
        }
        rows.push(AblationRow {
            draw: d + 1,
            source_particle: paths[*src].particle,
            chronology_hash: chronology_hash(ch),
            log_z_forced: zf,
            log_z_unforced: zu,
            log_bf: zf - zu,
            mc_error_forced: ef,
            mc_error_unforced: eu,
        });
    }
    rec.write("ablation.csv", table.as_bytes())?;
    rec.write("ablation.json", &json(&rows)?)?;
    rec.write("ablation_chronologies.csv", chron.as_bytes())?;
    rec.finish()?;
    Ok(())
}

pub fn summarize(chronology: &Path, common: &Common) -> Result<()> {
    let cfg = load_config(common.config.as_deref())?;
    let out = out_dir(common.out.as_ref(), &cfg)?;
    let mut rec = Recorder::new("summarize", &out, common.config.as_deref(), Some(&cfg));
    if let Some(p) = &common.config {
        rec.input(p)?;
    }
    rec.input(chronology)?;
    let text = std::fs::read_to_string(chronology).map_err(|e| Error::io(chronology, e))?;
    let paths = parse_chronology_csv(&text, chronology)?;
    let hdrs = slice_hdrs(&paths, cfg.summary.hdr_mass, &cfg.summary.grid)?;
    rec.write("hdr.csv", hdr_csv(&hdrs).as_bytes())?;
    let profile = path_age_sd_profile(&paths)?;
    log::info!("mean age sd {:.3} kyr over {} slices", profile.mean, profile.per_slice.len());
    rec.write("age_sd.json", &json(&profile)?)?;
    rec.finish()?;
    Ok(())
}
