use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("geometry violation: {0}")]
    Geometry(String),
    #[error("CFL violation: dt = {dt:e} exceeds limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("ellipticity violation: {0}")]
    Ellipticity(String),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("no qualifying cylinder: best density {best:.6} below required {required:.6}")]
    NoQualifyingCylinder { best: f64, required: f64 },
    #[error("certification failed: residual {residual:e} at t = {t}, |x| = {radius}")]
    Certification { residual: f64, t: f64, radius: f64 },
    #[error("steady state not reached within horizon {horizon}: last rate {rate:e}")]
    NotConverged { horizon: f64, rate: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
