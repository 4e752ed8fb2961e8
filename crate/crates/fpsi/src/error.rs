use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("geometry violation: {0}")]
    Geometry(String),
    #[error("size mismatch: expected {expected}, got {got}")]
    Size { expected: usize, got: usize },
    #[error("incompatible data: {0}")]
    Compatibility(String),
    #[error("linear solve failed: {reason} (relative residual {residual:.3e})")]
    Solver { reason: String, residual: f64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {msg}")]
    Format { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Size { expected, got })
    }
}
