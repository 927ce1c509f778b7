use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Simulate,
    Scatter,
    Embed,
    Keygen,
    Evaluate,
    Nist,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Config => "config",
            Self::Simulate => "simulate",
            Self::Scatter => "scatter",
            Self::Embed => "embed",
            Self::Keygen => "keygen",
            Self::Evaluate => "evaluate",
            Self::Nist => "nist",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A failure tagged with the stage that hit it and, where there is one, the file.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub path: Option<PathBuf>,
    pub message: String,
}

impl StageError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self { stage, path: None, message: message.to_string() }
    }

    pub fn at(stage: Stage, path: &Path, message: impl fmt::Display) -> Self {
        Self { stage, path: Some(path.to_path_buf()), message: message.to_string() }
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{} stage: {}: {}", self.stage, p.display(), self.message),
            None => write!(f, "{} stage: {}", self.stage, self.message),
        }
    }
}

impl std::error::Error for StageError {}

pub type StageResult<T> = std::result::Result<T, StageError>;
