use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut hasher = Sha256::new();
        io::copy(&mut BufReader::new(file), &mut hasher).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: hex::encode(hasher.finalize()),
        })
    }
}

/// Provenance record written next to every command output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch_seconds: Option<Vec<f64>>,
}

pub struct Recorder {
    command: &'static str,
    started: Instant,
    inputs: Vec<FileDigest>,
    epoch_seconds: Option<Vec<f64>>,
}

impl Recorder {
    /// Digests inputs up front so the record reflects what was read.
    pub fn start(command: &'static str, inputs: &[&Path]) -> Result<Self> {
        Ok(Self {
            command,
            started: Instant::now(),
            inputs: inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            epoch_seconds: None,
        })
    }

    pub fn with_epoch_seconds(mut self, seconds: Vec<f64>) -> Self {
        self.epoch_seconds = Some(seconds);
        self
    }

    /// Writes `<primary>.run.json` covering `outputs` (the first is the
    /// primary output). Returns the manifest path.
    pub fn finish(self, config: impl Serialize, seed: Option<u64>, outputs: &[&Path]) -> Result<PathBuf> {
        let manifest = RunManifest {
            tool: env!("CARGO_BIN_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.to_string(),
            argv: std::env::args().collect(),
            config: serde_json::to_value(config).context("serializing resolved config")?,
            seed,
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            threads: rayon::current_num_threads(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            epoch_seconds: self.epoch_seconds,
        };
        let path = sidecar(outputs[0], "run.json");
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `dir/name.ext` → `dir/name.ext.<suffix>`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_appends() {
        assert_eq!(sidecar(Path::new("out/g.bin"), "run.json"), PathBuf::from("out/g.bin.run.json"));
    }

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            FileDigest::of(&p).unwrap().sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
