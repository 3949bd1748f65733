//! Error classification for exit codes.

use spingarch::inference::InferenceError;
use spingarch::process::ProcessError;

#[derive(Debug)]
pub enum CliError {
    /// Bad inputs: flags, files, shapes. Exit code 2.
    Validation(String),
    /// The computation itself failed. Exit code 3.
    Numerical(String),
}

impl CliError {
    pub fn validation(msg: impl ToString) -> Self {
        CliError::Validation(msg.to_string())
    }
}

impl From<spingarch::io::FormatError> for CliError {
    fn from(e: spingarch::io::FormatError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<spingarch::graph::GraphError> for CliError {
    fn from(e: spingarch::graph::GraphError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<spingarch::car::CarError> for CliError {
    fn from(e: spingarch::car::CarError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<spingarch::moments::MomentsError> for CliError {
    fn from(e: spingarch::moments::MomentsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<spingarch::stats::StatsError> for CliError {
    fn from(e: spingarch::stats::StatsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ProcessError> for CliError {
    fn from(e: ProcessError) -> Self {
        match e {
            ProcessError::IntensityDiverged { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::TooManyDivergences { .. } | InferenceError::InitFailed => {
                CliError::Numerical(e.to_string())
            }
            InferenceError::Process(p) => p.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}
