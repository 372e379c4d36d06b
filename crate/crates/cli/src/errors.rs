use std::fmt;

/// Command failure with its process exit code: 2 for usage or validation
/// problems, 3 for a non-convergent fit, 1 otherwise.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub code: i32,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { message: message.into(), code: 2 }
    }

    pub fn non_convergent(message: impl Into<String>) -> Self {
        Self { message: message.into(), code: 3 }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { message: message.into(), code: 1 }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<bdarch::Error> for CliError {
    fn from(e: bdarch::Error) -> Self {
        match &e {
            bdarch::Error::Domain(_) | bdarch::Error::Config(_) | bdarch::Error::Data(_) => {
                Self::usage(e.to_string())
            }
            bdarch::Error::Init(_) => Self::runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(format!("io error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::usage(format!("csv error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::usage(format!("json error: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
