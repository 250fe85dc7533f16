use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Numbers are carried as `f64` regardless of the scalar type used for the computation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("point ({x}, {y}) is outside the chart window")]
    OutsideWindow { x: f64, y: f64 },
    #[error("invalid metric chart: {0}")]
    InvalidChart(String),
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },
    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    Shooting { iterations: usize, residual: f64 },
    #[error("conjugate point: unexpected Riccati blow-up at t = {t}")]
    ConjugatePoint { t: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("diagnostics: {0}")]
    Diagnostics(String),
    #[error("traces do not intersect within the traced half-length")]
    NoIntersection,
    #[error("horocycle corrector diverged at arclength {s}")]
    CorrectorDiverged { s: f64 },
}

pub type Result<T> = std::result::Result<T, GeoError>;
