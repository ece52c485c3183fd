use std::fmt;

/// Failure of a CLI invocation, carrying its exit-code class.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or unreadable configuration (exit 2).
    Config(String),
    /// An upstream artifact is missing (exit 2).
    Dependency { stage: String, missing: String, run_first: String },
    /// Anything that went wrong while running a stage (exit 1).
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn config(key: &str, reason: String) -> Self {
        CliError::Config(format!("`{key}`: {reason}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Dependency { .. } => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Dependency { stage, missing, run_first } => {
                write!(f, "stage `{stage}` needs {missing}; run {run_first} first")
            }
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<triad_core::Error> for CliError {
    fn from(e: triad_core::Error) -> Self {
        match e {
            triad_core::Error::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.into()),
        }
    }
}
