use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::verdict::VerdictLabel;
use super::LlmError;

/// One cached completion, keyed by model and prompt digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub digest: String,
    pub model: String,
    pub raw: String,
    pub label: VerdictLabel,
    pub ts: String,
}

struct Inner {
    entries: HashMap<(String, String), CacheEntry>,
    file: Option<File>,
}

/// Append-only JSONL store of raw responses. Later lines for the same key
/// replace earlier ones on load.
pub struct VerdictCache {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl VerdictCache {
    pub fn in_memory() -> Self {
        Self { path: None, inner: Mutex::new(Inner { entries: HashMap::new(), file: None }) }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| LlmError::Cache { path: path.display().to_string(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(&line).map_err(|e| LlmError::CacheFormat {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                entries.insert((entry.model.clone(), entry.digest.clone()), entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(Self { path: Some(path), inner: Mutex::new(Inner { entries, file: Some(file) }) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, model: &str, digest: &str) -> Option<CacheEntry> {
        self.lock().entries.get(&(model.to_string(), digest.to_string())).cloned()
    }

    pub fn len(&self) -> usize {
        self.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records an entry in memory and appends it to the backing file.
    pub fn insert(&self, entry: CacheEntry) -> Result<(), LlmError> {
        let mut inner = self.lock();
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&entry).expect("serializable cache entry");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(|source| LlmError::Cache {
                path: self.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                source,
            })?;
        }
        inner.entries.insert((entry.model.clone(), entry.digest.clone()), entry);
        Ok(())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}
