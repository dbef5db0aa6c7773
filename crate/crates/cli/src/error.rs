use ni_consensus::Error;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error {0}")]
    Config(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0} failed")]
    CheckFailed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{failed} sweep run(s) failed")]
    SweepFailed { code: i32, failed: usize },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Divergence(_) => 3,
            Self::CheckFailed(_) => 4,
            Self::SweepFailed { code, .. } => *code,
            Self::Io(_) | Self::Other(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { t, .. } => Self::Divergence(format!("simulation diverged at t={t}")),
            Error::Dimension(_)
            | Error::InvalidGraph(_)
            | Error::Disconnected
            | Error::NotHurwitz
            | Error::InvalidDelta(_)
            | Error::InvalidParameter(_)
            | Error::MissingTrajectory(_)
            | Error::Unknown { .. } => Self::Config(format!(": {e}")),
            other => Self::Other(other.to_string()),
        }
    }
}
