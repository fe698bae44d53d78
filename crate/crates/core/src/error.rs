use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid, solver or model configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The input is degenerate (zero field, zero norm, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The grid cannot represent the requested field.
    #[error("under-resolved: {0}")]
    Resolution(String),

    /// A numerical solver failed.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Two objects live on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
