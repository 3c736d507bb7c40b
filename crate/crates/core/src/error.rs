use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not square: {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("matrix has {0} nonzeros, more than 32-bit indices can address")]
    TooLarge(usize),

    #[error("chebyshev expansion did not converge below {tol:e} within {cap} terms; use a smaller time step")]
    SeriesCutoff { tol: f64, cap: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
