use thiserror::Error;

/// Errors with stable process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit 1: malformed input text.
    #[error("parse error: {0}")]
    Parse(String),
    /// Exit 2: an input or workdir violates a precondition.
    #[error("{0}")]
    Invariant(String),
    /// Exit 3: rendering failed or the white-texture alignment check did not pass.
    #[error("{0}")]
    Render(String),
    /// Exit 4: the attack aborted.
    #[error("attack aborted: {0}")]
    Attack(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 1,
            CliError::Invariant(_) => 2,
            CliError::Render(_) => 3,
            CliError::Attack(_) => 4,
        }
    }
}

pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Invariant(format!("{}: {e}", path.display()))
}
