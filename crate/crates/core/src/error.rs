use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point is off the manifold (defect {defect:.3e})")]
    OffManifold { defect: f64 },
    #[error("vector is not tangent at the base point (normal part {normal:.3e})")]
    NotTangent { normal: f64 },
    #[error("degree {degree} exceeds the supported maximum {max}")]
    DegreeOverflow { degree: usize, max: usize },
    #[error("degree mismatch: expected {expected}, got {got}")]
    DegreeMismatch { expected: usize, got: usize },
    #[error("slot count mismatch: expected {expected}, got {got}")]
    SlotMismatch { expected: usize, got: usize },
    #[error("integrator blow-up at step {step}: re-projection moved the point by {jump:.3e}")]
    BlowUp { step: usize, jump: f64 },
    #[error("grid length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{operation} is not available on {manifold}")]
    Unsupported { operation: &'static str, manifold: String },
    #[error("finite-difference oracle unstable: residual ratio {ratio:.3} between eps and eps/2")]
    OracleUnstable { ratio: f64 },
    #[error("reports are not comparable: {0}")]
    ConfigMismatch(String),
    #[error("singular linear system while inverting a transport map")]
    Singular,
}

pub type Result<T> = std::result::Result<T, Error>;
