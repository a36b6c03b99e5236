use std::fmt;

use pedaware::io::IoError;
use pedaware::optimize::OptimizeError;
use pedaware::predict::PredictError;
use pedaware::sim::SimError;

pub const EXIT_PARSE: u8 = 2;
pub const EXIT_PREDICTION: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;
pub const EXIT_INTERNAL: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_PARSE, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        let code = match e {
            IoError::Write(_) => EXIT_INTERNAL,
            _ => EXIT_PARSE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<PredictError> for CliError {
    fn from(e: PredictError) -> Self {
        Self::new(EXIT_PREDICTION, e.to_string())
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        let code = match e {
            OptimizeError::InsufficientBudgetForGreenZone { .. } => EXIT_INFEASIBLE,
            OptimizeError::Solver(_) => EXIT_INTERNAL,
            _ => EXIT_PARSE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Predict(p) => p.into(),
            SimError::Optimize(o) => o.into(),
            other => Self::new(EXIT_PARSE, other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_INTERNAL, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(EXIT_INTERNAL, e.to_string())
    }
}
