//! JSON-lines corpus manifests.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_id: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, String>,
}

impl ManifestEntry {
    pub fn new(utt_id: impl Into<String>) -> Self {
        Self {
            utt_id: utt_id.into(),
            audio_path: None,
            source_text: None,
            target_text: None,
            speaker_id: None,
            extras: BTreeMap::new(),
        }
    }

    pub fn with_audio(mut self, path: impl Into<PathBuf>) -> Self {
        self.audio_path = Some(path.into());
        self
    }

    pub fn with_source(mut self, text: impl Into<String>) -> Self {
        self.source_text = Some(text.into());
        self
    }

    pub fn with_target(mut self, text: impl Into<String>) -> Self {
        self.target_text = Some(text.into());
        self
    }
}

/// Checks id uniqueness and that every entry carries audio or source text.
pub fn validate(entries: &[ManifestEntry]) -> Result<()> {
    let mut seen = HashSet::new();
    for e in entries {
        if !seen.insert(e.utt_id.as_str()) {
            return Err(Error::Argument(format!("duplicate utterance id `{}`", e.utt_id)));
        }
        if e.audio_path.is_none() && e.source_text.is_none() {
            return Err(Error::Argument(format!(
                "entry `{}` has neither audio_path nor source_text",
                e.utt_id
            )));
        }
    }
    Ok(())
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry = serde_json::from_str(line)
            .map_err(|e| Error::Argument(format!("manifest line {}: {e}", i + 1)))?;
        entries.push(e);
    }
    validate(&entries)?;
    Ok(entries)
}

/// Reads a manifest; relative audio paths are resolved against its directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = parse_manifest(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for e in &mut entries {
        if let Some(a) = &e.audio_path {
            if a.is_relative() {
                e.audio_path = Some(base.join(a));
            }
        }
    }
    Ok(entries)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_jsonl(items)?.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    write_jsonl(path, entries)
}
