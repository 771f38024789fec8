use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Gaussian state: {0}")]
    InvalidState(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("Gaussian-sum fit residual {rms:.3e} V_B exceeds threshold {threshold:.3e} V_B")]
    FitResidual { rms: f64, threshold: f64 },
    #[error("invalid field signal: {0}")]
    InvalidField(String),
    #[error("field evaluated at t = {t} outside [{start}, {end}]")]
    FieldOutOfRange { t: f64, start: f64, end: f64 },
    #[error("alpha became non-positive ({alpha:.3e}) at t = {t}")]
    AnsatzBreakdown { t: f64, alpha: f64 },
    #[error("invalid control problem: {0}")]
    InvalidProblem(String),
    #[error("inconsistent bounds for {what} {index}: lower {lower} > upper {upper}")]
    InconsistentBounds { what: &'static str, index: usize, lower: f64, upper: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("Gaussian support does not fit the grid at the {edge} edge")]
    GridSupport { edge: &'static str },
    #[error("norm drifted to {norm} at t = {t}")]
    NormDrift { t: f64, norm: f64 },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),
}
