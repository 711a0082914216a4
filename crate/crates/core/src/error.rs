use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("scattering matrix is not unitary (|SS^dag - I| = {0:.3e})")]
    NonUnitaryScattering(f64),

    #[error("feedback pivot 1 - S[{output}][{input}] is singular")]
    SingularFeedback { output: usize, input: usize },

    #[error("port index {index} out of range for {ports} ports")]
    PortOutOfRange { index: usize, ports: usize },

    #[error("imaginary residue {0:.3e} left after quadrature stacking")]
    ComplexResidue(f64),

    #[error("drift matrix is singular")]
    SingularDrift,

    #[error("system is not Hurwitz (spectral abscissa {0:.3e})")]
    UnstableSystem(f64),

    #[error("algebraic loop: I - D_loop is singular")]
    AlgebraicLoop,

    #[error("negative noise strength k_n = {0}")]
    NegativeNoise(f64),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("index {index} out of range ({len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("negative coupling {0}")]
    NegativeCoupling(f64),

    #[error("invalid beamsplitter transmittance {0}")]
    InvalidTransmittance(f64),

    #[error("parameter `{0}` must be positive")]
    NonPositiveParam(&'static str),

    #[error("measurement noise covariance is singular")]
    SingularMeasurementNoise,

    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),

    #[error("invalid oracle parameters: {0}")]
    InvalidKindParams(String),

    #[error("division by zero in {0}")]
    DivisionByZero(&'static str),

    #[error("no stable starting point after {0} draws")]
    NoStableStart(usize),

    #[error("maximum iterations ({0}) reached")]
    MaxIterations(usize),

    #[error("invalid template: {0}")]
    InvalidTemplate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
