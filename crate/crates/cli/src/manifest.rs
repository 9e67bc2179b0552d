use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    /// SHA-256 over `blob <len>\0<bytes>`, as git hashes blobs.
    pub sha256: String,
}

/// Record of one command run, written next to its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub elapsed_secs: f64,
}

pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Digests of `paths`; a directory contributes its files in name order,
/// skipping earlier manifests.
pub fn digest_inputs(paths: &[&Path]) -> Result<Vec<InputDigest>> {
    let mut out = Vec::new();
    for &p in paths {
        let files: Vec<PathBuf> = if p.is_dir() {
            let mut v: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            v.retain(|f| f.is_file() && f.file_name().is_none_or(|n| n != MANIFEST_FILE));
            v.sort();
            v
        } else {
            vec![p.to_path_buf()]
        };
        for f in files {
            let bytes = fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
            out.push(InputDigest {
                path: f.display().to_string(),
                sha256: blob_hash(&bytes),
            });
        }
    }
    Ok(out)
}

pub struct ManifestBuilder {
    command: String,
    started_unix: u64,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.to_string(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            clock: Instant::now(),
        }
    }

    pub fn write(
        self,
        dir: &Path,
        config: serde_json::Value,
        seeds: Vec<u64>,
        inputs: Vec<InputDigest>,
        outputs: &[&str],
    ) -> Result<RunManifest> {
        let m = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            inputs,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            started_unix: self.started_unix,
            elapsed_secs: self.clock.elapsed().as_secs_f64(),
        };
        write_json(&dir.join(MANIFEST_FILE), &m)?;
        Ok(m)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
