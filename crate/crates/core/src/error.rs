use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what}: length mismatch (expected {expected}, got {got})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    /// Both effective accelerations vanish (e.g. free fall); the gravity
    /// reference carries no angle information and atan2 degenerates to 0/0.
    #[error("degenerate geometry: reference magnitude {quality:.3e} below threshold")]
    DegenerateGeometry { quality: f64 },

    #[error("training failed: {0}")]
    Training(String),

    #[error("singular linear system")]
    SingularSystem,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
