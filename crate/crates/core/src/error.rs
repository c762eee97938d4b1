use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tableau: {0}")]
    Tableau(String),
    #[error("unknown tableau `{name}`; available: {available}")]
    UnknownTableau { name: String, available: String },
    #[error("velocity grid: {0}")]
    Velocity(String),
    #[error("collision operator: {0}")]
    Collision(String),
    #[error("argument not in the range of L (bracket {bracket:e})")]
    NotInRange { bracket: f64 },
    #[error("stencil: {0}")]
    Stencil(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("singular system in stage {stage}: {what}")]
    Singular { stage: usize, what: String },
    #[error("analysis: {0}")]
    Analysis(String),
}

impl Error {
    /// True for errors raised while stepping a solver rather than while
    /// checking inputs.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::Singular { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
