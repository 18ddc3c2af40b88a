use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse { origin: String, line: usize, column: usize, message: String },
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("unknown preset `{0}` (try --list)")]
    UnknownPreset(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("serialization: {0}")]
    Serialize(String),
    #[error(transparent)]
    Core(#[from] fimci::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Splits a core validation message of the form `field: detail`.
    pub(crate) fn from_validation(err: fimci::Error) -> Self {
        let text = match &err {
            fimci::Error::Domain(m) => m.clone(),
            other => other.to_string(),
        };
        match text.split_once(": ") {
            Some((field, message)) if !field.contains(' ') => {
                CliError::Validation { field: field.to_string(), message: message.to_string() }
            }
            _ => CliError::Validation { field: "config".into(), message: text },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
