use enose_core::config::ConfigError;
use enose_core::csvio::CsvError;
use enose_core::filter::FilterError;
use enose_core::pipeline::PipelineError;
use enose_core::sim::SimError;
use enose_core::stereo::StereoError;
use std::fmt;

/// CLI failure carrying its exit code: 1 I/O, 2 config/schema, 3 failed
/// figure check.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Schema(String),
    Acceptance(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Schema(_) => 2,
            CliError::Acceptance(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) | CliError::Schema(m) | CliError::Acceptance(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Schema(other.to_string()),
        }
    }
}

impl From<CsvError> for CliError {
    fn from(e: CsvError) -> Self {
        match e {
            CsvError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Schema(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<StereoError> for CliError {
    fn from(e: StereoError) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
