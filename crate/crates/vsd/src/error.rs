use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Core(#[from] vsd_core::Error),

    #[error("{}: {source}", path.display())]
    FeatureFile {
        path: PathBuf,
        #[source]
        source: FeatureFileError,
    },

    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },

    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: &'static str },

    #[error("{file}:{line}: {message}")]
    Row { file: String, line: u64, message: String },

    #[error("{file}: {message}")]
    Json { file: String, message: String },

    #[error("{file}: content hash mismatch (stored {stored}, computed {computed})")]
    HashMismatch {
        file: String,
        stored: String,
        computed: String,
    },

    #[error("{file}: {message}")]
    Xml { file: String, message: String },

    #[error("{file}: {message}")]
    Image { file: String, message: String },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(file: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv {
            file: file.into(),
            source,
        }
    }
}

/// Ways a feature file can be rejected.
#[derive(Debug, thiserror::Error)]
pub enum FeatureFileError {
    #[error("bad magic {found:?}, expected \"VSDF\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("unknown flag bits {0:#06x}")]
    UnknownFlags(u16),

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("{extra} unexpected bytes after the payload")]
    TrailingBytes { extra: u64 },

    #[error("row id {index} is not valid UTF-8")]
    InvalidId { index: u64 },

    #[error("duplicate row id `{0}`")]
    DuplicateId(String),

    #[error("header declares {n_rows} rows of dim {dim}, which does not fit in memory")]
    TooLarge { n_rows: u64, dim: u64 },

    #[error(transparent)]
    Layout(vsd_core::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
