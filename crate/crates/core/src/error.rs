use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("consensus requires a connected graph")]
    Disconnected,

    #[error("dc-gain undefined for non-Hurwitz A")]
    NotHurwitz,

    #[error("resolvent (jwI - A) is singular at w = {0}")]
    SingularResolvent(f64),

    #[error("strictness level delta must be positive, got {0}")]
    InvalidDelta(f64),

    #[error("not NI, no strictness level exists")]
    NotNi,

    #[error("no equilibrium found from this guess (residual {residual:e})")]
    NoEquilibrium { residual: f64 },

    #[error("equilibrium solve failed for constant input {input:?}")]
    EquilibriumFailure { input: Vec<f64> },

    #[error("divergence at t={t}")]
    Divergence { t: f64, last_state: Vec<f64> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("check `{0}` needs a simulated trajectory")]
    MissingTrajectory(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
}
