use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use paleojoint_core::config::RunConfig;
use paleojoint_core::io::{sha256_file, sha256_hex, write_atomic};
use paleojoint_core::Result;
use serde::Serialize;

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub argv: Vec<String>,
    pub config_path: Option<PathBuf>,
    /// SHA-256 of the resolved configuration as echoed below.
    pub config_hash: String,
    pub config: Option<RunConfig>,
    /// SHA-256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<PathBuf>,
}

pub struct Recorder {
    manifest: RunManifest,
    out_dir: PathBuf,
}

impl Recorder {
    pub fn new(command: &str, out_dir: &Path, config_path: Option<&Path>, config: Option<&RunConfig>) -> Self {
        let resolved = config.map(RunConfig::resolved);
        let config_hash = resolved.as_ref().map_or_else(String::new, |c| sha256_hex(c.to_toml().as_bytes()));
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                argv: std::env::args().collect(),
                config_path: config_path.map(Path::to_path_buf),
                config_hash,
                config: resolved,
                inputs: BTreeMap::new(),
                seed: None,
                workers: None,
                started_at: now(),
                finished_at: String::new(),
                outputs: Vec::new(),
            },
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.manifest.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn seed(&mut self, seed: u64, workers: Option<usize>) {
        self.manifest.seed = Some(seed);
        self.manifest.workers = workers;
    }

    /// Writes `bytes` atomically under the output directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        write_atomic(&path, bytes)?;
        self.manifest.outputs.push(path.clone());
        Ok(path)
    }

    /// Lists a file written outside [`Recorder::write`], such as a log.
    pub fn record_output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.to_path_buf());
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.finished_at = now();
        let path = self.out_dir.join("manifest.json");
        self.manifest.outputs.push(path.clone());
        let json = serde_json::to_vec_pretty(&self.manifest)?;
        write_atomic(&path, &json)?;
        Ok(path)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
