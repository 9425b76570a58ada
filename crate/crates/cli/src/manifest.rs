use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hetcrf::{Error, Result};
use serde::Serialize;

pub const THREADS_VAR: &str = "HETCRF_THREADS";

/// Record of one invocation, written before any work and rewritten on exit.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub dataset_path: Option<PathBuf>,
    pub synthetic_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    /// Seed the synthetic graph was generated with.
    pub graph_seed: Option<u64>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub status: String,
}

pub fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Reads the thread cap; execution is single-threaded, the value is recorded.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_VAR}={v:?} is not a positive integer"))),
        },
    }
}

/// Writes `body` through a temporary sibling so readers never see a partial file.
pub fn write_atomic(path: &Path, body: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or("")));
    let mut f = fs::File::create(&tmp).map_err(|e| io(&tmp, e))?;
    f.write_all(body).map_err(|e| io(&tmp, e))?;
    f.sync_all().map_err(|e| io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io(path, e))
}

pub fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

impl RunManifest {
    pub fn path(&self) -> PathBuf {
        self.output_dir.join("manifest.json")
    }

    pub fn write(&self) -> Result<()> {
        let body = serde_json::to_string_pretty(self)? + "\n";
        write_atomic(&self.path(), body.as_bytes())
    }

    pub fn finish(&mut self, status: &str) -> Result<()> {
        self.finished_unix = Some(now_unix());
        self.status = status.to_string();
        self.write()
    }
}
