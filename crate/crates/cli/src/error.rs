use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config keys or values.
    #[error("{0}")]
    Usage(String),
    /// Inputs that should exist from an earlier step are missing.
    #[error("{0}")]
    State(String),
    #[error(transparent)]
    Core(#[from] oodseg::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn code(&self) -> u8 {
        use oodseg::Error as E;
        match self {
            Self::Usage(_) => 2,
            Self::State(_) => 4,
            Self::Core(E::Io { .. }) => 3,
            Self::Core(E::State(_)) => 4,
            Self::Core(_) => 2,
        }
    }
}
