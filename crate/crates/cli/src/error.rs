use bbo_arena::analysis::AnalysisError;
use bbo_arena::harness::HarnessError;
use bbo_arena::optimizers::OptimizerError;
use bbo_arena::problems::ProblemError;
use bbo_arena::scoring::ScoringError;
use thiserror::Error;

/// Every failure maps to one of two exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, manifests or strategy configs.
    #[error("{0}")]
    Config(String),
    /// Missing, corrupt or unusable results and calibration data.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) | HarnessError::Optimizer(_) => CliError::Config(e.to_string()),
            HarnessError::Io { .. } | HarnessError::Data { .. } => CliError::Data(e.to_string()),
        }
    }
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<OptimizerError> for CliError {
    fn from(e: OptimizerError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ScoringError> for CliError {
    fn from(e: ScoringError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
