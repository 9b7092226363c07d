use thiserror::Error;

/// Library-wide error type.
///
/// The three domain variants map onto the CLI exit codes: `Input` → 2,
/// `Capability` → 3. "Property not satisfied" is not an error; operations
/// report it through their return values.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input (bad indices, empty blocks,
    /// parameters outside their declared ranges, unparseable files).
    #[error("input error: {0}")]
    Input(String),

    /// A request that exceeds a configured exactness guard (exact search
    /// over too large a space). The message names the guard.
    #[error("capability error: {0}")]
    Capability(String),

    /// A caller violated an operation precondition (e.g. decomposing from a
    /// report that is not satisfied at the required strength).
    #[error("precondition error: {0}")]
    Precondition(String),

    /// An internal consistency check failed. Seeing this is a bug.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}
