use std::fmt;

use serde::Serialize;

/// A failure reported as one JSON line on stderr.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub error: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(error: &'static str, message: impl Into<String>) -> Self {
        Self { error, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("usage", message)
    }

    pub fn io(what: impl fmt::Display, e: impl fmt::Display) -> Self {
        Self::new("io", format!("{what}: {e}"))
    }

    pub fn missing(resource: &str, detail: impl fmt::Display) -> Self {
        Self::new("missing_resource", format!("{resource}: {detail}"))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("failure serializes")
    }

    pub fn exit_code(&self) -> i32 {
        match self.error {
            "usage" => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.error, self.message)
    }
}

impl std::error::Error for Failure {}

pub type CliResult<T> = Result<T, Failure>;
