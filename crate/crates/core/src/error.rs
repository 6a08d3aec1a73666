use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid walk parameters: {0}")]
    InvalidParams(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("operation requires the PT-broken phase, but all |lambda| = 1")]
    PtSymmetricPhase,

    #[error("operation requires the PT-symmetric phase, but the spectrum is PT-broken")]
    PtBrokenPhase,

    #[error("dominant eigenvalue is degenerate: |lambda| at k = {k:.6} is within {rel_tol:e} of |lambda_max|")]
    DegenerateDominantEigenvalue { k: f64, rel_tol: f64 },

    #[error("truncation at rank {rank} splits a degenerate pair (|lambda_r| = {lower:.12e}, |lambda_r+1| = {upper:.12e}); choose another rank")]
    DegenerateTruncation { rank: usize, lower: f64, upper: f64 },

    #[error("exceptional point on the momentum grid at k = {k:.6}: eigenvectors are not biorthonormalizable")]
    ExceptionalPoint { k: f64 },

    #[error("matrix of order {n} exceeds the limit {limit} for this permanent routine")]
    PermanentTooLarge { n: usize, limit: usize },

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("configuration count C({modes}+{photons}-1, {photons}) exceeds the enumeration limit")]
    EnumerationOverflow { modes: usize, photons: usize },

    #[error("photon number mismatch: inputs carry {inputs}, outputs carry {outputs}")]
    PhotonNumberMismatch { inputs: usize, outputs: usize },

    #[error("distributions are defined over different enumerations ({0} vs {1})")]
    EnumerationMismatch(String, String),

    #[error("propagator does not hold the amplitude row for input mode {0}")]
    MissingInputRow(usize),

    #[error("mode {mode} out of range for {modes} modes")]
    ModeOutOfRange { mode: usize, modes: usize },

    #[error("need at least {needed} points for the fit, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
}
