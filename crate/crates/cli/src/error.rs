use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] kdvision::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{0} is locked by another writer")]
    Locked(PathBuf),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Process exit status of each error family.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO_ERROR: i32 = 3;
    pub const DIMENSION_MISMATCH: i32 = 4;
    pub const SELECTION: i32 = 5;
    pub const ANALYSIS: i32 = 6;
    pub const LOCKED: i32 = 7;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use kdvision::Error as E;
        match self {
            CliError::Config(_) => exit::USAGE,
            CliError::File { .. } => exit::IO_ERROR,
            CliError::Locked(_) => exit::LOCKED,
            CliError::Core(e) => match e {
                E::Io(_) | E::Parse(_) => exit::IO_ERROR,
                E::DimensionMismatch(_) | E::SchemaMismatch(_) | E::ShapeMismatch => exit::DIMENSION_MISMATCH,
                E::EmptySelection | E::InvalidInterval { .. } | E::IdOutOfRange { .. } | E::MissingImage(_) => {
                    exit::SELECTION
                }
                _ => exit::ANALYSIS,
            },
        }
    }
}

pub fn read(path: &std::path::Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::File { path: path.to_path_buf(), source })
}

pub fn read_text(path: &std::path::Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::File { path: path.to_path_buf(), source })
}
