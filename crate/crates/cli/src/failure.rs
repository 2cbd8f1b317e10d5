use std::fmt;

use windregime::Error;

/// Why a command stopped; each kind has its own exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config, or input files.
    Config(String),
    /// An earlier stage's artifact is missing.
    Dependency(String),
    /// A computation rejected its inputs or produced an invalid result.
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Dependency(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Dependency(m) => write!(f, "stage dependency error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Json { .. } | Error::Corrupt(_) | Error::Version { .. } | Error::Lookup(_) => {
                Failure::Config(e.to_string())
            }
            Error::Validation(_) | Error::Range(_) => Failure::Numerical(e.to_string()),
        }
    }
}
