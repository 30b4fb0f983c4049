use std::path::PathBuf;

/// Errors surfaced by the bench commands; [`BenchError::exit_code`] maps them
/// onto the CLI contract.
#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed weight file: {0}")]
    Format(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] merge_core::Error),
    #[error("{context}: {source}")]
    Context { context: String, source: Box<BenchError> },
}

pub type Result<T> = std::result::Result<T, BenchError>;

impl BenchError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> BenchError {
        let path = path.into();
        move |source| BenchError::Io { path, source }
    }

    pub fn context(self, context: impl Into<String>) -> BenchError {
        BenchError::Context { context: context.into(), source: Box::new(self) }
    }

    /// 2 usage, 3 data or shape, 4 protocol.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Usage(_) => 2,
            BenchError::Core(merge_core::Error::Protocol(_) | merge_core::Error::TripleReuse(_)) => 4,
            BenchError::Context { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
