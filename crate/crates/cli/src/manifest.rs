//! Per-stage manifests and the timestamped sidecar log.
//!
//! A manifest lists the digest of the resolved stage configuration and the
//! sha256 of every input and output. It carries no timestamps, so re-running
//! a stage with the same configuration and inputs rewrites it byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use iul_core::digest::sha256_hex;

use crate::error::{Context, ErrorKind, StageError, StageResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_digest: String,
    pub config: Value,
    /// Logical input name to sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the run directory to sha256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub facts: BTreeMap<String, Value>,
}

pub fn config_digest<T: Serialize>(cfg: &T) -> String {
    sha256_hex(serde_json::to_vec(cfg).expect("config serializes"))
}

pub fn file_digest(path: &Path) -> StageResult<String> {
    fs::read(path)
        .map(sha256_hex)
        .map_err(|e| StageError::missing(format!("cannot read {}: {e}", path.display())))
}

/// The run's output directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub out: PathBuf,
}

impl Workspace {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into() }
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out.join(rel)
    }

    /// Path of an upstream artifact, which must exist.
    pub fn require(&self, rel: impl AsRef<Path>, producer: &str) -> StageResult<PathBuf> {
        let path = self.path(rel);
        if path.exists() {
            Ok(path)
        } else {
            Err(StageError::missing(format!("{} not found; run `iul {producer}` first", path.display())))
        }
    }

    pub fn manifest(&self, dir: impl AsRef<Path>, producer: &str) -> StageResult<Manifest> {
        let path = self.require(dir.as_ref().join(MANIFEST_FILE), producer)?;
        let text = fs::read_to_string(&path).or_kind(ErrorKind::Io, &path.display().to_string())?;
        serde_json::from_str(&text).or_kind(ErrorKind::Data, &path.display().to_string())
    }

    /// Checks that the files a manifest lists still hold what it recorded.
    pub fn verify_outputs(&self, manifest: &Manifest) -> StageResult<()> {
        for (rel, digest) in &manifest.outputs {
            let actual = file_digest(&self.path(rel))?;
            if &actual != digest {
                return Err(StageError::stale(format!(
                    "{rel} changed since `iul {}` wrote it; rerun that stage",
                    manifest.stage
                )));
            }
        }
        Ok(())
    }
}

/// Collects a stage's inputs and outputs, then writes its manifest.
pub struct StageRun<'a> {
    ws: &'a Workspace,
    dir: PathBuf,
    seed: Option<u64>,
    manifest: Manifest,
}

impl<'a> StageRun<'a> {
    pub fn new<C: Serialize>(ws: &'a Workspace, stage: &str, dir: impl Into<PathBuf>, config: &C) -> StageResult<Self> {
        let dir = dir.into();
        let full = ws.path(&dir);
        fs::create_dir_all(&full).or_kind(ErrorKind::Io, &full.display().to_string())?;
        Ok(Self {
            ws,
            dir,
            seed: None,
            manifest: Manifest {
                stage: stage.to_string(),
                config_digest: config_digest(config),
                config: serde_json::to_value(config).expect("config serializes"),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                facts: BTreeMap::new(),
            },
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn dir(&self) -> PathBuf {
        self.ws.path(&self.dir)
    }

    pub fn input_file(&mut self, name: &str, path: &Path) -> StageResult<()> {
        let digest = file_digest(path)?;
        self.manifest.inputs.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn input_digest(&mut self, name: &str, digest: impl Into<String>) {
        self.manifest.inputs.insert(name.to_string(), digest.into());
    }

    pub fn fact(&mut self, key: &str, value: impl Serialize) {
        self.manifest.facts.insert(key.to_string(), serde_json::to_value(value).expect("fact serializes"));
    }

    /// Writes `name` inside the stage directory and records it.
    pub fn write(&mut self, name: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> StageResult<PathBuf> {
        let rel = self.dir.join(name);
        let path = self.ws.path(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).or_kind(ErrorKind::Io, &parent.display().to_string())?;
        }
        fs::write(&path, bytes.as_ref()).or_kind(ErrorKind::Io, &path.display().to_string())?;
        self.manifest.outputs.insert(slash(&rel), sha256_hex(bytes.as_ref()));
        Ok(path)
    }

    /// Records a file another writer already put inside the stage directory.
    pub fn record(&mut self, name: impl AsRef<Path>) -> StageResult<()> {
        let rel = self.dir.join(name);
        let digest = file_digest(&self.ws.path(&rel))?;
        self.manifest.outputs.insert(slash(&rel), digest);
        Ok(())
    }

    pub fn finish(self) -> StageResult<Manifest> {
        let path = self.ws.path(self.dir.join(MANIFEST_FILE));
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).or_kind(ErrorKind::Io, &path.display().to_string())?;
        self.log()?;
        Ok(self.manifest)
    }

    fn log(&self) -> StageResult<()> {
        let dir = self.ws.path("logs");
        fs::create_dir_all(&dir).or_kind(ErrorKind::Io, &dir.display().to_string())?;
        let path = dir.join(format!("{}.log", self.manifest.stage));
        let inputs: Vec<String> = self.manifest.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let line = format!(
            "{} dir={} config_digest={} seed={} inputs=[{}] outputs={}\n",
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            slash(&self.dir),
            self.manifest.config_digest,
            self.seed.map_or_else(|| "-".to_string(), |s| s.to_string()),
            inputs.join(","),
            self.manifest.outputs.len(),
        );
        log::info!("{}: {}", self.manifest.stage, line.trim_end());
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .or_kind(ErrorKind::Io, &path.display().to_string())?;
        f.write_all(line.as_bytes()).or_kind(ErrorKind::Io, &path.display().to_string())
    }
}

/// Forward-slash relative path, stable across platforms.
fn slash(p: &Path) -> String {
    p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}
