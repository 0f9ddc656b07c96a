use std::path::PathBuf;

/// Errors of the file layer and the command line, each with its own exit
/// code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("input file missing: {}", .0.display())]
    InputMissing(PathBuf),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema mismatch in {}: {reason}", path.display())]
    SchemaMismatch { path: PathBuf, reason: String },
    #[error("checksum mismatch for {}: sidecar {expected}, file {found}", path.display())]
    ChecksumMismatch { path: PathBuf, expected: String, found: String },
    #[error(transparent)]
    Core(#[from] steerkit_core::Error),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            AppError::InputMissing(path)
        } else {
            AppError::Io { path, source }
        }
    }

    pub fn schema(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        AppError::SchemaMismatch { path: path.into(), reason: reason.into() }
    }

    /// Process exit code. 2 is reserved for command-line usage errors.
    pub fn exit_code(&self) -> u8 {
        use steerkit_core::Error as E;
        match self {
            AppError::ConfigInvalid(_) => 3,
            AppError::InputMissing(_) => 4,
            AppError::Io { .. } => 5,
            AppError::SchemaMismatch { .. } => 6,
            AppError::ChecksumMismatch { .. } => 7,
            AppError::Core(e) => match e {
                E::NonHermitian(_) | E::NoConvergence(_) | E::NearSingular(_) | E::InvalidState(_) | E::ShapeMismatch(_) => 10,
                E::ParamOutOfRange(_) | E::DegenerateSpectrum => 11,
                E::TooManySettings(_) | E::SolverStalled { .. } => 12,
                E::FilterSingular(_) | E::ClassGenerationFailed(_) => 13,
                E::DegenerateData(_) | E::DivergedLoss { .. } | E::AllStagesRejected(_) => 14,
                E::FeatureKindMismatch { .. } => 15,
            },
        }
    }
}
