use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument {value} lies outside the domain of the {potential} subdifferential")]
    Domain { potential: &'static str, value: f64 },

    #[error("resolvent iteration did not converge after {iterations} iterations (r = {r}, eps = {eps})")]
    ResolventNonConvergence { iterations: usize, r: f64, eps: f64 },

    #[error("conjugate gradient stalled: residual {residual:e} after {iterations} iterations")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("state blow-up at t = {t}: non-finite value in {field}")]
    BlowUp { t: f64, field: &'static str },

    #[error("fields live on different meshes: {0}")]
    MeshMismatch(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("step failed at t = {t}: {source}")]
    StepFailed {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("bound not applicable: {0}")]
    BoundInapplicable(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("malformed field data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
