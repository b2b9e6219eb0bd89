use std::fmt;
use std::path::PathBuf;

use hltomo::Error;
use serde_json::json;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MODEL: i32 = 3;
pub const EXIT_DATA: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io { path: PathBuf, source: std::io::Error },
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_CONFIG,
            CliError::Lib(e) => match e {
                Error::Io { .. } | Error::Schema { .. } | Error::InvalidParameter(_) => EXIT_CONFIG,
                Error::PhaseCoverage { .. }
                | Error::FitFailure(_)
                | Error::UncalibratedStep(_)
                | Error::EmptyInput(_) => EXIT_DATA,
                _ => EXIT_MODEL,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_CONFIG => "config",
            EXIT_MODEL => "model",
            _ => "data_quality",
        }
    }

    fn path(&self) -> Option<&PathBuf> {
        match self {
            CliError::Io { path, .. } => Some(path),
            CliError::Lib(Error::Io { path, .. }) | CliError::Lib(Error::Schema { path, .. }) => Some(path),
            _ => None,
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        let mut doc = json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        });
        if let Some(p) = self.path() {
            doc["error"]["path"] = json!(p.display().to_string());
        }
        doc.to_string()
    }
}
