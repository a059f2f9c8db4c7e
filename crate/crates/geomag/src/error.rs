use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomagError {
    #[error("connection not finite at path parameter t = {t}")]
    Evaluation { t: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(
        "ill-conditioned matching matrix (condition estimate {cond:.3e}); rescale the exponentials"
    )]
    Conditioning { cond: f64 },
    #[error("numerical conditioning: {0}")]
    Numerical(String),
    #[error("accuracy not reached: achieved {achieved:.3e}, wanted {wanted:.3e}")]
    Accuracy { achieved: f64, wanted: f64 },
    #[error("energy {energy} lies within {tol:e} of the threshold {threshold}")]
    ThresholdProximity {
        energy: f64,
        threshold: f64,
        tol: f64,
    },
    #[error("transmission undefined for k = {k} <= Phi = {phi}")]
    UndefinedTransmission { k: f64, phi: f64 },
    #[error("packet reached the boundary: norm {mass:.3e} inside the guard band at tau = {tau}")]
    WrapAround { mass: f64, tau: f64 },
    #[error("no free-flight window found in trajectory")]
    InsufficientPropagation,
}

pub type Result<T> = std::result::Result<T, GeomagError>;
