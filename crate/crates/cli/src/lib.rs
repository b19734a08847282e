//! Command line orchestration for `zy-core`: config parsing, subcommands and run manifests.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;
use zy_core::ZyError;

pub mod commands;
pub mod config;

pub use commands::{scan_trends, Command, ScanTrends};
pub use config::{RunConfig, TOOL_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_GATE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] ZyError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                ZyError::Io(_) | ZyError::Format(_) => EXIT_IO,
                ZyError::Invalid(_) | ZyError::Budget(_) => EXIT_USAGE,
                ZyError::NotHermitian(_) | ZyError::NonFinite { .. } => EXIT_GATE,
            },
        }
    }
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    RunConfig::parse(&text)
}

/// Files written by one command, with their hashes.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    pub digest: [u8; 32],
    pub files: Vec<(String, [u8; 32])>,
}

impl Outputs {
    pub fn new(dir: &Path, digest: [u8; 32]) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Outputs { dir: dir.to_path_buf(), digest, files: Vec::new() })
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        self.files.push((name.to_string(), Sha256::digest(bytes).into()));
        Ok(path)
    }

    /// CSV with the config digest on its first line.
    pub fn write_csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<PathBuf, CliError> {
        let mut s = format!("# config_digest = {}\n{header}\n", self.digest_hex());
        for r in rows {
            s.push_str(&r);
            if !r.ends_with('\n') {
                s.push('\n');
            }
        }
        self.write(name, s.as_bytes())
    }
}

/// Result of one subcommand: printed lines and gate failures.
#[derive(Debug, Default)]
pub struct Report {
    pub lines: Vec<String>,
    pub failures: Vec<String>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            EXIT_OK
        } else {
            EXIT_GATE
        }
    }
}

/// Runs `cmd` and writes its outputs plus `manifest_<cmd>.txt` into `out`. The manifest is a
/// valid config file: rerunning with it reproduces every listed output bit for bit.
pub fn execute(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<(Report, Outputs), CliError> {
    let mut outputs = Outputs::new(out, cfg.digest())?;
    let report = commands::run(cmd, cfg, &mut outputs)?;
    let mut m = format!("# {TOOL_VERSION}\n# command = {}\n# config_digest = {}\n", cmd.name(), outputs.digest_hex());
    for (name, h) in &outputs.files {
        m.push_str(&format!("# output {name} sha256={}\n", hex::encode(h)));
    }
    m.push('\n');
    m.push_str(&cfg.canonical());
    let path = out.join(format!("manifest_{}.txt", cmd.name().replace('-', "_")));
    std::fs::write(&path, m).map_err(io_err(&path))?;
    Ok((report, outputs))
}
