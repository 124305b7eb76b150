//! Run manifests: what was run, with which resolved settings, on which
//! inputs, producing which outputs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha512};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub role: String,
    pub path: PathBuf,
    pub bytes: u64,
    pub sha512: String,
}

impl Artifact {
    pub fn of(role: &str, path: &Path) -> Result<Self> {
        let mut f = File::open(path).with_context(|| format!("hashing {}", path.display()))?;
        let mut hasher = Sha512::new();
        let mut buf = vec![0u8; 1 << 20];
        let mut bytes = 0u64;
        loop {
            let k = f.read(&mut buf)?;
            if k == 0 {
                break;
            }
            hasher.update(&buf[..k]);
            bytes += k as u64;
        }
        Ok(Artifact {
            role: role.to_string(),
            path: path.to_path_buf(),
            bytes,
            sha512: hex::encode(hasher.finalize()),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument vector; replaying it re-runs the command.
    pub argv: Vec<String>,
    pub tool_version: String,
    pub parallel: bool,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub started_unix: u64,
    pub notes: Vec<String>,
}

/// Collects manifest fields while a command runs.
pub struct ManifestBuilder {
    manifest: RunManifest,
    clock: Instant,
    phase: Option<(String, Instant)>,
}

impl ManifestBuilder {
    pub fn start(command: &str, parallel: bool) -> Self {
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                argv: std::env::args().collect(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                parallel,
                config: serde_json::Value::Null,
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings: BTreeMap::new(),
                started_unix,
                notes: Vec::new(),
            },
            clock: Instant::now(),
            phase: None,
        }
    }

    pub fn config(&mut self, value: impl Serialize) -> Result<()> {
        self.manifest.config = serde_json::to_value(value)?;
        Ok(())
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.to_string(), value);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.manifest.notes.push(text.into());
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.manifest.inputs.push(Artifact::of(role, path)?);
        Ok(())
    }

    pub fn output(&mut self, role: &str, path: &Path) -> Result<()> {
        self.manifest.outputs.push(Artifact::of(role, path)?);
        Ok(())
    }

    /// Close the running phase (if any) and start timing `name`.
    pub fn phase(&mut self, name: &str) {
        self.end_phase();
        self.phase = Some((name.to_string(), Instant::now()));
    }

    fn end_phase(&mut self) {
        if let Some((name, t)) = self.phase.take() {
            self.manifest.timings.insert(name, t.elapsed().as_secs_f64());
        }
    }

    pub fn finish(mut self, path: &Path) -> Result<RunManifest> {
        self.end_phase();
        self.manifest
            .timings
            .insert("total".into(), self.clock.elapsed().as_secs_f64());
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}
