use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] genresig_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("bad magic bytes, expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {found} (this build reads {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// Process exit code: 2 for anything that went wrong reading or writing
    /// files, 1 for invalid input or arguments.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(genresig_core::Error::MissingCache(_))
            | Error::Io { .. }
            | Error::UnsupportedEncoding(_)
            | Error::TruncatedFile(_)
            | Error::MalformedHeader(_)
            | Error::BadMagic { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Json { .. }
            | Error::Csv { .. } => 2,
            Error::Core(_) | Error::Invalid(_) => 1,
        }
    }
}

/// `map_err` adapter attaching a path to an `io::Error`.
pub fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
    move |source| Error::Json { path: path.to_path_buf(), source }
}

pub fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv { path: path.to_path_buf(), source }
}
