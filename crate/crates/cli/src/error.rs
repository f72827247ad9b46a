use fate_core::FateError;

#[derive(Debug)]
pub enum CliError {
    Core(FateError),
    Config(String),
    /// A verification command ran and did not pass.
    CheckFailed(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Config(_) => "E_CONFIG",
            CliError::CheckFailed(_) => "E_GRADCHECK",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(FateError::Numeric { .. }) | CliError::CheckFailed(_) => 1,
            _ => 2,
        }
    }

    /// Single line: `CODE: message`.
    pub fn line(&self) -> String {
        let msg = match self {
            CliError::Core(e) => e.to_string(),
            CliError::Config(m) | CliError::CheckFailed(m) => m.clone(),
        };
        format!("{}: {}", self.code(), msg.replace('\n', " "))
    }
}

impl From<FateError> for CliError {
    fn from(e: FateError) -> Self {
        CliError::Core(e)
    }
}
