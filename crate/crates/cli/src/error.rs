use jdexpand::error::{ExpansionError, McError, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("expansion budget exceeded: {0}")]
    Budget(String),
    #[error("evaluation failed: {0}")]
    Eval(String),
    #[error("monte carlo failed: {0}")]
    Mc(#[from] McError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Eval(_) | CliError::Mc(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<ExpansionError> for CliError {
    fn from(e: ExpansionError) -> Self {
        match e {
            ExpansionError::BudgetExceeded { .. } | ExpansionError::OrderCap { .. } => CliError::Budget(e.to_string()),
            other => CliError::Eval(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}
