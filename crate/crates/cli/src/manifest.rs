//! Run manifests: resolved config, seed, and SHA-256 digests of every input
//! read and artifact written.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use soda::config::Config;
use soda::Error;

use crate::error::CliResult;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a Config,
    config_sha256: String,
    threads: usize,
    inputs: &'a [FileDigest],
    artifacts: &'a [FileDigest],
}

/// Tracks the files one command touches.
pub struct Run {
    out: PathBuf,
    inputs: Vec<FileDigest>,
    artifacts: Vec<FileDigest>,
}

impl Run {
    pub fn new(out: &Path) -> CliResult<Self> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        Ok(Run {
            out: out.to_path_buf(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    /// Read an input file and record its digest.
    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len(),
        });
        Ok(bytes)
    }

    /// Write an artifact under the output directory.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.out.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(FileDigest {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn finish(self, command: &str, cfg: &Config, threads: usize) -> CliResult<()> {
        let config_text = serde_json::to_string(cfg).expect("config serializes");
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config: cfg,
            config_sha256: sha256_hex(config_text.as_bytes()),
            threads,
            inputs: &self.inputs,
            artifacts: &self.artifacts,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.out.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_reference() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn records_inputs_and_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, b"abc").unwrap();
        let mut run = Run::new(&dir.path().join("out")).unwrap();
        assert_eq!(run.read(&input).unwrap(), b"abc");
        run.write("sub/a.txt", b"abc").unwrap();
        run.finish("test", &Config::default(), 1).unwrap();
        let text = fs::read_to_string(dir.path().join("out").join(MANIFEST_FILE)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["artifacts"][0]["path"], "sub/a.txt");
        assert_eq!(v["inputs"][0]["sha256"], v["artifacts"][0]["sha256"]);
        assert_eq!(v["config"]["p"], 16);
    }
}
