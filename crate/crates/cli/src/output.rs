//! Input reading with digests, canonical output and manifest sidecars.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kinegraph::canonical;
use kinegraph::FloatFormat;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_digest: &'a str,
    inputs: &'a [InputDigest],
    output: String,
    version: &'a str,
    seed: u64,
    wall_time_s: f64,
}

/// One command invocation: the inputs it read and the outputs it wrote.
pub struct Run {
    command: &'static str,
    config_digest: String,
    inputs: Vec<InputDigest>,
    seed: u64,
    start: Instant,
}

impl Run {
    /// `args` excludes output paths, so the digest depends only on what
    /// determines the result.
    pub fn new<T: Serialize>(command: &'static str, args: &T, seed: u64) -> Self {
        let config = canonical::to_string(args, FloatFormat::Full).unwrap_or_default();
        Self {
            command,
            config_digest: hex_sha256(config.as_bytes()),
            inputs: Vec::new(),
            seed,
            start: Instant::now(),
        }
    }

    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex_sha256(&bytes),
        });
        String::from_utf8(bytes)
            .map_err(|_| CliError::Input(format!("{} is not UTF-8 text", path.display())))
    }

    /// Writes `value` as canonical JSON and its manifest next to it, then
    /// prints the output path on stdout.
    pub fn write<T: Serialize + ?Sized>(
        &self,
        path: &Path,
        value: &T,
        fmt: FloatFormat,
    ) -> Result<(), CliError> {
        let text = canonical::to_string(value, fmt)
            .map_err(|e| CliError::Numerical(format!("cannot serialize result: {e}")))?;
        write_file(path, &text)?;
        let manifest = Manifest {
            command: self.command,
            config_digest: &self.config_digest,
            inputs: &self.inputs,
            output: path.display().to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            wall_time_s: self.start.elapsed().as_secs_f64(),
        };
        let text = canonical::to_string(&manifest, FloatFormat::Sig9)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        write_file(&manifest_path(path), &text)?;
        println!("{}", path.display());
        Ok(())
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}
