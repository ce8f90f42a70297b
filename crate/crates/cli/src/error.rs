use std::fmt;
use std::path::PathBuf;

/// Failure of a command, carrying the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Malformed, inconsistent or unsupported configuration.
    Config(String),
    /// A numerical routine failed or a precondition of a theorem did not hold
    /// on the data.
    Numeric {
        run: Option<String>,
        source: linbias::Error,
    },
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Everything ran, but at least one comparison missed its tolerance.
    ComparisonFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numeric { .. } => 2,
            CliError::Io { .. } => 3,
            CliError::ComparisonFailed(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags a numeric failure with the run it came from.
    pub(crate) fn in_run(self, label: &str, alpha: f64) -> Self {
        match self {
            CliError::Numeric { run: None, source } => CliError::Numeric {
                run: Some(format!("{label} (alpha = {alpha})")),
                source,
            },
            other => other,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric {
                run: Some(r),
                source,
            } => write!(f, "numeric error in {r}: {source}"),
            CliError::Numeric { run: None, source } => write!(f, "numeric error: {source}"),
            CliError::Io { path, source } => write!(f, "I/O error on {}: {source}", path.display()),
            CliError::ComparisonFailed(which) => {
                write!(f, "comparison failed for: {}", which.join(", "))
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<linbias::Error> for CliError {
    fn from(e: linbias::Error) -> Self {
        CliError::Numeric {
            run: None,
            source: e,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
