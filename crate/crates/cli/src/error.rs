use ident_core::IdentError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] IdentError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit status: 2 for precondition and input errors, 3 for
    /// exceeded subset budgets, 1 for I/O failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(IdentError::Budget { .. }) => 3,
            CliError::Core(IdentError::Io(_)) | CliError::File { .. } | CliError::Io(_) => 1,
            CliError::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn read_file(path: &str) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::File {
        path: path.into(),
        source,
    })
}

pub fn read_text(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.into(),
        source,
    })
}

pub fn write_file(path: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| CliError::File {
        path: path.into(),
        source,
    })
}
