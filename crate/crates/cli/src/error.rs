use fsagp::GpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, flag or input schema.
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Gp(#[from] GpError),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    /// 2 for configuration and schema problems, 3 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Io { .. } => 2,
            Self::Gp(e) => match e {
                GpError::Config(_) | GpError::Domain(_) | GpError::Dimension { .. } | GpError::TooLarge { .. } => 2,
                GpError::NotPositiveDefinite { .. }
                | GpError::Breakdown { .. }
                | GpError::NotConverged { .. }
                | GpError::Numerical(_) => 3,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}
