use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use netsir::ErrorKind;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub enum Failure {
    Core(netsir::Error),
    Usage(String),
}

impl Failure {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Failure::Core(e) => e.kind(),
            Failure::Usage(_) => ErrorKind::Validation,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Usage(m) => f.write_str(m),
        }
    }
}

impl From<netsir::Error> for Failure {
    fn from(e: netsir::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(netsir::Error::Io(e))
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub fn kind_label(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Validation => "validation",
        ErrorKind::Numerical => "numerical",
        ErrorKind::Inconclusive => "inconclusive",
    }
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Validation => 1,
        ErrorKind::Numerical => 2,
        ErrorKind::Inconclusive => 3,
    }
}

/// Collects every file written so the manifest can list them.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
}

impl Outputs {
    /// Writes to `path`, or to stdout when there is none.
    pub fn emit(&mut self, path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
        match path {
            Some(p) => {
                fs::write(p, bytes).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display())))?;
                self.files.push(p.to_path_buf());
            }
            None => {
                let mut out = io::stdout().lock();
                out.write_all(bytes)?;
                out.flush()?;
            }
        }
        Ok(())
    }

    pub fn emit_json(&mut self, path: Option<&Path>, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(netsir::Error::from)?;
        text.push('\n');
        self.emit(path, text.as_bytes())
    }
}

/// `<path><suffix>`, e.g. `run.csv` → `run.csv.stats.json`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub workers: usize,
    pub config: Option<String>,
    /// SHA-256 of the config file bytes.
    pub config_sha256: Option<String>,
    pub outputs: Vec<String>,
    pub exit_code: i32,
    /// Not part of the reproducible output.
    pub wall_time_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}
