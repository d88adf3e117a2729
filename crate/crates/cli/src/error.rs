use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },

    #[error(transparent)]
    Solver(#[from] shellspec_core::Error),

    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    /// 2 for couplings outside the supported theory, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Solver(shellspec_core::Error::CriticalCoupling { .. })
            | Self::Solver(shellspec_core::Error::MixedCoupling { .. }) => 2,
            _ => 1,
        }
    }
}
