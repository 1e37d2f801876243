use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("matrix is not Hurwitz (max eigenvalue real part {0:.3e}); no SPD Lyapunov solution")]
    NotHurwitz(f64),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("unknown system `{0}`")]
    Lookup(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("finite escape at t = {t:.6}: state norm exceeded {bound:e}")]
    FiniteEscape { t: f64, bound: f64, state: Vec<f64> },
    #[error("integrator step budget of {0} steps exhausted")]
    StepBudget(usize),
    #[error("no horizon in the grid satisfies the linear finite-time condition (best norm {best:.6} at d = {at})")]
    HorizonNotFound { best: f64, at: f64 },
    #[error("invalid problem specification: {0}")]
    Spec(String),
    #[error("level bracket rejected: {0}")]
    Bracket(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("geometry extraction failed: {0}")]
    Geometry(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status: 1 for bad input, 2 for a failed certification, 3 for numeric trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::HorizonNotFound { .. } | Error::Bracket(_) | Error::Certification(_) | Error::NotHurwitz(_) => 2,
            Error::Numeric(_) | Error::FiniteEscape { .. } | Error::StepBudget(_) | Error::Geometry(_) => 3,
            _ => 1,
        }
    }
}
