use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("solver stalled at p = {p}: {detail}")]
    Stall { p: f64, detail: String },
    #[error("invariant `{name}` violated: {detail}")]
    Invariant { name: String, detail: String },
    #[error("missing or stale artifact: {0}")]
    Missing(String),
    #[error("{0}")]
    Failed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// Process exit status: 2 config, 3 stall, 4 invariant, 5 missing artifacts.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } => 2,
            RunError::Stall { .. } => 3,
            RunError::Invariant { .. } => 4,
            RunError::Missing(_) => 5,
            RunError::Failed(_) | RunError::Io(_) => 1,
        }
    }
}
