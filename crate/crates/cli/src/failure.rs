use std::fmt;
use std::process::ExitCode;

/// Outcome of a failed run, mapped to the process exit status.
#[derive(Debug)]
pub enum Failure {
    /// Parameters did not validate; one message per failing field.
    Validation(Vec<String>),
    /// Valid input, failed computation or output.
    Compute(String),
}

impl Failure {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Failure::Validation(vec![msg.into()])
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Validation(_) => ExitCode::from(2),
            Failure::Compute(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(list) => {
                writeln!(f, "invalid parameters ({} problem{}):", list.len(), if list.len() == 1 { "" } else { "s" })?;
                for item in list {
                    writeln!(f, "  - {item}")?;
                }
                Ok(())
            }
            Failure::Compute(msg) => writeln!(f, "computation failed: {msg}"),
        }
    }
}

impl From<genbound::Error> for Failure {
    fn from(e: genbound::Error) -> Self {
        use genbound::Error;
        match e {
            Error::Domain(_) | Error::InvalidSpec(_) => Failure::Validation(vec![e.to_string()]),
            other => Failure::Compute(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}
