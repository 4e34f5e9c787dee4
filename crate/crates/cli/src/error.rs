use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Library(#[from] pattern_entropy::Error),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("json output: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    CapExceeded(String),

    #[error("{0} properties failed")]
    PropertyFailure(u64),
}

impl CliError {
    /// 1 for bad input, 2 for failed properties, 3 for exceeded caps.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Library(pattern_entropy::Error::ResourceCap { .. }) | Self::CapExceeded(_) => 3,
            Self::Library(pattern_entropy::Error::CorruptStream(_))
            | Self::Library(pattern_entropy::Error::ZeroProbability { .. })
            | Self::PropertyFailure(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
