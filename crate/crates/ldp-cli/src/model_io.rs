//! Versioned, checksummed persistence for VLMs and classifiers.
//!
//! The payload is serialized to JSON once and stored as a string inside the
//! envelope, so the checksum is computed over the exact bytes that will be
//! deserialized; JSON's shortest-round-trip float encoding makes the
//! round-trip bitwise exact.

use std::fs;
use std::path::Path;

use ldp_core::classifier::NoiseAwareClassifier;
use ldp_core::vlm::LaplaceVLM;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ModelPayload {
    Vlm(LaplaceVLM),
    Classifier(NoiseAwareClassifier),
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct ModelEnvelope {
    format_version: u32,
    /// Hex SHA-256 of the payload string.
    checksum: String,
    payload: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn save_model(payload: &ModelPayload, path: &Path) -> Result<()> {
    let payload_json = serde_json::to_string(payload)
        .map_err(|e| CliError::runtime(format!("model serialization failed: {e}")))?;
    let envelope = ModelEnvelope {
        format_version: FORMAT_VERSION,
        checksum: sha256_hex(payload_json.as_bytes()),
        payload: payload_json,
    };
    let text = serde_json::to_string_pretty(&envelope)
        .map_err(|e| CliError::runtime(format!("model serialization failed: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelPayload> {
    let text = fs::read_to_string(path)?;
    let envelope: ModelEnvelope = serde_json::from_str(&text).map_err(|e| {
        CliError::validation(format!("{} is not a model file: {e}", path.display()))
    })?;
    if envelope.format_version != FORMAT_VERSION {
        return Err(CliError::validation(format!(
            "model format version {} is not supported; this build reads version {FORMAT_VERSION}",
            envelope.format_version
        )));
    }
    let actual = sha256_hex(envelope.payload.as_bytes());
    if actual != envelope.checksum {
        return Err(CliError::validation(format!(
            "checksum mismatch in {}: stored {}, computed {actual}",
            path.display(),
            envelope.checksum
        )));
    }
    serde_json::from_str(&envelope.payload)
        .map_err(|e| CliError::validation(format!("corrupt model payload: {e}")))
}

/// Convenience accessors with kind checking.
pub fn load_vlm(path: &Path) -> Result<LaplaceVLM> {
    match load_model(path)? {
        ModelPayload::Vlm(m) => Ok(m),
        ModelPayload::Classifier(_) => Err(CliError::validation(format!(
            "{} holds a classifier, expected a VLM",
            path.display()
        ))),
    }
}

pub fn load_classifier(path: &Path) -> Result<NoiseAwareClassifier> {
    match load_model(path)? {
        ModelPayload::Classifier(c) => Ok(c),
        ModelPayload::Vlm(_) => Err(CliError::validation(format!(
            "{} holds a VLM, expected a classifier",
            path.display()
        ))),
    }
}
