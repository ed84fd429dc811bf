//! Versioned JSON model artifacts.
//!
//! Finite numbers are written in shortest round-trip form, so a thawed model
//! predicts bit-identically. Infinite thresholds are stored as the strings
//! `"inf"` and `"-inf"`.

use std::path::Path;

use medconf_core::{ConformalModel, ScoreKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("model artifact has format version {found}; this build reads version {FORMAT_VERSION}")]
    Version { found: u64 },
    #[error("model artifact has no `format_version` field")]
    Unversioned,
    #[error("artifact declares score `{declared}` but holds a `{found}` model")]
    ScoreMismatch { declared: ScoreKind, found: ScoreKind },
    #[error("malformed model artifact: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub score: ScoreKind,
    pub features: Vec<String>,
    pub response: String,
    pub model: ConformalModel,
}

impl ModelArtifact {
    pub fn new(model: ConformalModel, features: Vec<String>, response: String) -> Self {
        ModelArtifact {
            format_version: FORMAT_VERSION,
            score: model.score().kind(),
            features,
            response,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    /// Checks the version before reading anything else.
    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(found) => return Err(ArtifactError::Version { found }),
            None => return Err(ArtifactError::Unversioned),
        }
        let artifact: ModelArtifact = serde_json::from_value(value)?;
        let found = artifact.model.score().kind();
        if found != artifact.score {
            return Err(ArtifactError::ScoreMismatch {
                declared: artifact.score,
                found,
            });
        }
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
