use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// An upstream stage has not produced what this stage reads.
    MissingArtifact,
    /// An upstream artifact was produced under a different configuration.
    StaleArtifact,
    Config,
    Data,
    Io,
    Endpoint,
}

#[derive(Debug, Clone)]
pub struct StageError {
    pub kind: ErrorKind,
    pub message: String,
}

impl StageError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::MissingArtifact, message)
    }

    pub fn stale(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::StaleArtifact, message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Data, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Io, message)
    }

    pub fn endpoint(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Endpoint, message)
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self, stage: &str) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            stage: &'a str,
            error: ErrorKind,
            message: &'a str,
        }
        serde_json::to_string(&Body { stage, error: self.kind, message: &self.message }).expect("plain struct")
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for StageError {}

pub type StageResult<T> = Result<T, StageError>;

/// Attaches a kind to foreign errors.
pub trait Context<T> {
    fn or_kind(self, kind: ErrorKind, what: &str) -> StageResult<T>;
}

impl<T, E: fmt::Display> Context<T> for Result<T, E> {
    fn or_kind(self, kind: ErrorKind, what: &str) -> StageResult<T> {
        self.map_err(|e| StageError::new(kind, format!("{what}: {e}")))
    }
}
