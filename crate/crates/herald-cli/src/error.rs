use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config-error: {0}")]
    Config(String),
    #[error("{name}: {context}: {source}")]
    Numerical {
        name: &'static str,
        context: String,
        source: herald::Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("selftest: {0} check(s) failed")]
    SelfTest(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            _ => 1,
        }
    }
}

/// Attaches the grid point or step to an engine error; bad parameters are
/// reported as config errors, everything numerical keeps its engine name.
pub fn at(context: impl Into<String>) -> impl FnOnce(herald::Error) -> CliError {
    let context = context.into();
    move |e| match e {
        herald::Error::InvalidParameter(_) | herald::Error::Unphysical(_) => {
            CliError::Config(format!("{context}: {e}"))
        }
        herald::Error::Io(m) => CliError::Io(std::io::Error::other(m)),
        source => CliError::Numerical {
            name: source.name(),
            context,
            source,
        },
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
