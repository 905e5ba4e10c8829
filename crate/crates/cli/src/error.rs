use std::fmt;
use std::path::Path;

/// A failure with a short machine-parsable class, printed as one line.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub class: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(class: &'static str, message: impl Into<String>) -> Self {
        Self { class, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new("parse", message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }

    pub fn context(self, prefix: impl fmt::Display) -> Self {
        Self { class: self.class, message: format!("{prefix}: {}", self.message) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Messages never span lines, whatever the underlying error printed.
        write!(f, "error[{}]: {}", self.class, self.message.replace(['\n', '\r'], " "))
    }
}

impl std::error::Error for CliError {}

impl From<codetune_core::Error> for CliError {
    fn from(e: codetune_core::Error) -> Self {
        Self::new(e.class(), e.to_string())
    }
}
