//! Cluster and model files (TOML or JSON) and their digests.

use std::path::Path;

use hexplan_core::cluster::{ClusterDocument, ClusterSpec, ModelSpec};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Identity of one input file as recorded in a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

enum Format {
    Toml,
    Json,
}

fn format_of(path: &Path) -> Result<Format, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => Ok(Format::Toml),
        Some("json") => Ok(Format::Json),
        _ => Err(CliError::Format(path.to_path_buf())),
    }
}

/// Parses `text` as the format implied by `path`.
pub fn parse_str<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, CliError> {
    let parse_err = |message: String| CliError::Parse {
        path: path.to_path_buf(),
        message,
    };
    match format_of(path)? {
        Format::Toml => toml::from_str(text).map_err(|e| parse_err(e.to_string())),
        Format::Json => serde_json::from_str(text).map_err(|e| parse_err(e.to_string())),
    }
}

fn read(path: &Path, role: &str) -> Result<(String, InputDigest), CliError> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let digest = InputDigest {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    };
    let text = String::from_utf8(bytes).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((text, digest))
}

/// Parses and validates a cluster document.
pub fn parse_cluster(path: &Path, text: &str) -> Result<ClusterSpec, CliError> {
    let doc: ClusterDocument = parse_str(path, text)?;
    ClusterSpec::from_document(doc).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

/// Parses and validates a model file.
pub fn parse_model(path: &Path, text: &str) -> Result<ModelSpec, CliError> {
    let model: ModelSpec = parse_str(path, text)?;
    model
        .validate()
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    Ok(model)
}

pub fn load_cluster(path: &Path) -> Result<(ClusterSpec, InputDigest), CliError> {
    let (text, digest) = read(path, "cluster")?;
    Ok((parse_cluster(path, &text)?, digest))
}

pub fn load_model(path: &Path) -> Result<(ModelSpec, InputDigest), CliError> {
    let (text, digest) = read(path, "model")?;
    Ok((parse_model(path, &text)?, digest))
}

/// Renders a document as TOML.
pub fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("documents serialize to TOML")
}
