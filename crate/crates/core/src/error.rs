use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// Each variant carries a stable name (see [`Error::name`]) that the CLI
/// renders into its machine-readable error object.
#[derive(Debug, Error)]
pub enum Error {
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("no sign change of the drift on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("equilibrium is not attracting: {0}")]
    UnstableEquilibrium(String),
    #[error("drift changes sign {count} times on the scan grid")]
    MultipleRoots { count: usize },
    #[error("generator on the window is singular: {0}")]
    SingularSystem(String),
    #[error("total jump rate is not finite at state {state}")]
    RateOverflow { state: i64 },
    #[error("total jump rate is zero at state {state}")]
    StuckState { state: i64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::WindowTooSmall(_) => "WindowTooSmall",
            Error::NoSignChange { .. } => "NoSignChange",
            Error::UnstableEquilibrium(_) => "UnstableEquilibrium",
            Error::MultipleRoots { .. } => "MultipleRoots",
            Error::SingularSystem(_) => "SingularSystem",
            Error::RateOverflow { .. } => "RateOverflow",
            Error::StuckState { .. } => "StuckState",
            Error::InvalidModel(_) => "InvalidModel",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
