//! JSON persistence for trained models, guarded by a SHA-256 of the model body.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vsd_core::regression::RegressionModel;

use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "vsd-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    /// Hex SHA-256 of the compact JSON encoding of `model`.
    sha256: String,
    model: RegressionModel,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn model_hash(model: &RegressionModel) -> Result<String> {
    let body = serde_json::to_vec(model).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(sha256_hex(&body))
}

pub fn model_to_string(model: &RegressionModel) -> Result<String> {
    let doc = Document {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        sha256: model_hash(model)?,
        model: model.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Invalid(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Parses a model document; `file` only labels errors.
pub fn model_from_str(text: &str, file: &str) -> Result<RegressionModel> {
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::Json {
        file: file.into(),
        message: e.to_string(),
    })?;
    if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
        return Err(Error::Json {
            file: file.into(),
            message: format!("unsupported model document {} v{}", doc.format, doc.version),
        });
    }
    let computed = model_hash(&doc.model)?;
    if computed != doc.sha256 {
        return Err(Error::HashMismatch {
            file: file.into(),
            stored: doc.sha256,
            computed,
        });
    }
    Ok(doc.model)
}

pub fn save_model(model: &RegressionModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<RegressionModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text, &path.display().to_string())
}
