use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the library, split into validation errors (bad inputs)
/// and numerical errors (a computation that could not be completed).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no sign change in quantization bracket k={k}, [{lo}, {hi}] after fallback scan")]
    RootBracketing { k: i64, lo: f64, hi: f64 },

    #[error("adaptive quadrature did not converge on [{lo}, {hi}], local error {err:e}")]
    QuadratureNonConvergence { lo: f64, hi: f64, err: f64 },

    #[error("mollifier boundary transform vanishes at p={p}, a={a} (p*a outside the resolvable range)")]
    MollifierDegenerate { p: f64, a: f64 },

    #[error("determinant reached zero while tracking the branch at p={p}, lambda={lambda}")]
    BranchPointCollision { p: f64, lambda: num_complex::Complex64 },

    #[error("branch tracking ambiguous: {0}")]
    BranchAmbiguity(String),

    #[error("singular counting determinant at lambda={lambda}, mu={mu}, t={t}")]
    SingularDeterminant {
        lambda: num_complex::Complex64,
        mu: f64,
        t: f64,
    },

    #[error("run window violated: {0}")]
    WindowViolation(String),

    #[error("operation requires equal reservoir temperatures (beta1 = beta2), got beta1={beta1}, beta2={beta2}")]
    UnequalTemperatures { beta1: f64, beta2: f64 },

    #[error("linear algebra backend error: {0}")]
    LinAlg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::LinAlg(e.to_string())
    }
}

impl Error {
    /// True for errors caused by invalid inputs rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::WindowViolation(_)
                | Error::UnequalTemperatures { .. }
        )
    }
}
