use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] dre_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("malformed {what} {}: {detail}", path.display())]
    Format { what: &'static str, path: PathBuf, detail: String },

    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn format(what: &'static str, path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        CliError::Format { what, path: path.into(), detail: detail.to_string() }
    }

    /// 2 for bad input, 3 for numerical failure, 4 for a failed verification, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Format { .. } => 2,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(_) => 2,
            CliError::Verify(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) if e.is_numeric() => "numeric",
            CliError::Core(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Format { .. } => "format",
            CliError::Verify(_) => "verify",
        }
    }

    /// Machine-readable form printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({
            "kind": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        match self {
            CliError::Core(dre_core::Error::Diverged { iteration, what }) => {
                body["iteration"] = json!(iteration);
                body["quantity"] = json!(what);
            }
            CliError::Core(dre_core::Error::StepUnderflow { t, partial, nfe }) => {
                body["t"] = json!(t);
                body["partial"] = json!(partial);
                body["nfe"] = json!(nfe);
            }
            _ => {}
        }
        json!({ "error": body })
    }
}
