use alloc::string::String;

/// Errors raised by the numerical core.
///
/// Variants are grouped by the subsystem that raises them; callers in the
/// std companion crate map each class to a distinct process exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    // --- state algebra ---
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NonHermitian(f64),
    #[error("iterative routine did not converge: {0}")]
    NoConvergence(&'static str),
    #[error("matrix is near-singular (min eigenvalue {0:e})")]
    NearSingular(f64),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    // --- state families and measurements ---
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
    #[error("observable has a degenerate spectrum")]
    DegenerateSpectrum,

    // --- steering SDP ---
    #[error("{0} settings exceed the supported maximum of 8")]
    TooManySettings(usize),
    #[error("SDP solver stalled after {iterations} iterations (neither certificate verified)")]
    SolverStalled { iterations: usize },

    // --- features and datasets ---
    #[error("Bob's marginal is near-singular (min eigenvalue {0:e}); F2 is undefined")]
    FilterSingular(f64),
    #[error("class generation failed: {0}")]
    ClassGenerationFailed(String),

    // --- learning ---
    #[error("training data is degenerate: {0}")]
    DegenerateData(String),
    #[error("training loss diverged at epoch {epoch} (learning rate {lr})")]
    DivergedLoss { epoch: usize, lr: f64 },
    #[error("first boosting stage has weighted error {0} >= 0.5")]
    AllStagesRejected(f64),
    #[error("feature kind mismatch: model expects {expected}, got {found}")]
    FeatureKindMismatch { expected: &'static str, found: &'static str },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
