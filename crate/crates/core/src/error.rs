use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("phase grid does not contain the preimage: {bound} (lower bound {value:.6e} <= sup|z| = {required:.6e})")]
    Containment { bound: &'static str, value: f64, required: f64 },

    #[error("coefficient bandwidth {bandwidth} of {what} exceeds 2K = {limit}")]
    Bandwidth { what: String, bandwidth: i64, limit: i64 },

    #[error("degenerate fit: V_z(t) vanishes at t = {t:.3e}")]
    DegenerateFit { t: f64 },

    #[error("empty perturbation basis (D = 0)")]
    EmptyBasis,

    #[error("matrix is numerically singular: smallest singular value {smallest:.3e}")]
    Singular { smallest: f64 },

    #[error("degenerate Grushin projection: t[{index}] and t[{next}] differ by {gap:.3e}")]
    DegenerateProjection { index: usize, next: usize, gap: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian: defect {defect:.3e}")]
    NotHermitian { defect: f64 },

    #[error("linear algebra backend failed: {0}")]
    Solver(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("modified symbol guard failed: best margin {margin:.3e} < {required:.3e}")]
    Guard { margin: f64, required: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> LabError {
    LabError::Parameter {
        name,
        reason: reason.into(),
    }
}
