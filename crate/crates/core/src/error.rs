use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "operator is not Hermitian: entry ({row}, {col}) deviates from the conjugate of \
         ({col}, {row}) by {deviation:.3e} (relative tolerance 1e-12)"
    )]
    NotHermitian {
        row: usize,
        col: usize,
        deviation: f64,
    },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("operator is not unitary: ||U U^dagger - I||_F = {0:.3e}")]
    NotUnitary(f64),

    #[error("function is undefined on the spectrum (eigenvalue {eigenvalue:.6e} maps to {value})")]
    UndefinedOnSpectrum { eigenvalue: f64, value: f64 },

    /// The first argument of a relative entropy has weight outside the support of the second.
    #[error("relative entropy is infinite: support condition violated (leaked weight {leak:.3e})")]
    InfiniteDivergence { leak: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("illegal protocol: {0}")]
    IllegalProtocol(String),

    #[error(
        "battery guard band too small: need at least {required_levels} levels, ladder has {available}"
    )]
    GuardBand {
        required_levels: usize,
        available: usize,
    },

    #[error(
        "spectrum is incommensurate with the battery grid: rounding residual {residual:.3e} \
         exceeds tolerance {tolerance:.3e}"
    )]
    Incommensurate { residual: f64, tolerance: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
