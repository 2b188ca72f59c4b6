use std::fmt;

/// Every failure the front end reports. Printed as one JSON line.
#[derive(Debug)]
pub enum CliError {
    Core(soda::Error),
    Usage(String),
    /// Inputs were read but failed validation.
    Invalid(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "Usage",
            CliError::Invalid(_) => "ValidationFailed",
        }
    }

    pub fn line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) | CliError::Invalid(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<soda::Error> for CliError {
    fn from(e: soda::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
