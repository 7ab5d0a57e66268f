//! Model files: JSON objects with keys A, B, C, Q, R, Sigma_w, Sigma_v,
//! Sigma_0, each a row-major nested numeric array.

use std::path::Path;

use crate::lqg_model::LqgModel;

#[derive(Debug)]
pub enum LoadError {
    Io(std::io::Error),
    /// JSON syntax or type error with its position.
    Parse { line: usize, column: usize, message: String },
    /// Parsed but dimensionally inconsistent.
    Invalid(String),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "cannot read model file: {e}"),
            LoadError::Parse { line, column, message } => {
                write!(f, "model parse error at line {line} column {column}: {message}")
            }
            LoadError::Invalid(m) => write!(f, "invalid model: {m}"),
        }
    }
}

impl std::error::Error for LoadError {}

pub fn load_model(path: &Path) -> Result<LqgModel, LoadError> {
    let text = std::fs::read_to_string(path).map_err(LoadError::Io)?;
    let model: LqgModel = serde_json::from_str(&text).map_err(|e| LoadError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    model.validate_dims().map_err(|e| LoadError::Invalid(e.to_string()))?;
    Ok(model)
}

pub fn save_model(path: &Path, model: &LqgModel) -> std::io::Result<()> {
    let json = serde_json::to_string_pretty(model).expect("model serializes");
    std::fs::write(path, json)
}
