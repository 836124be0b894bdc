use hicrec_core::Error as CoreError;

/// Command failures, grouped by process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    /// Classifies a library error and prefixes `context`.
    pub fn from_core(context: &str, e: CoreError) -> Self {
        let msg = if context.is_empty() {
            e.to_string()
        } else {
            format!("{context}: {e}")
        };
        match e {
            CoreError::NonFinite { .. } => CliError::Numeric(msg),
            CoreError::InvalidArgument(_) | CoreError::MetaPath(_) => CliError::Config(msg),
            _ => CliError::Data(msg),
        }
    }
}

pub trait Context<T> {
    fn context(self, context: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for Result<T, CoreError> {
    fn context(self, context: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::from_core(context, e))
    }
}
