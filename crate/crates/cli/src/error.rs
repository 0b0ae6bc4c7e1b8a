use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI run, each naming the violated invariant.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: invariant `{invariant}` violated: {detail}")]
    Parse { invariant: String, detail: String },

    #[error("precondition `{name}` violated: {detail}")]
    Precondition { name: String, detail: String },

    #[error("verification failed: invariant `{invariant}`: {detail}")]
    Verification { invariant: String, detail: String },

    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn parse(invariant: impl Into<String>, detail: impl Into<String>) -> Self {
        CliError::Parse {
            invariant: invariant.into(),
            detail: detail.into(),
        }
    }

    pub fn precondition(name: impl Into<String>, detail: impl Into<String>) -> Self {
        CliError::Precondition {
            name: name.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for unparsable input, 3 for violated preconditions, 4 for failed
    /// verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Io { .. } => 2,
            CliError::Precondition { .. } => 3,
            CliError::Verification { .. } => 4,
        }
    }

    pub fn invariant(&self) -> &str {
        match self {
            CliError::Parse { invariant, .. } | CliError::Verification { invariant, .. } => invariant,
            CliError::Precondition { name, .. } => name,
            CliError::Io { .. } => "readable_input",
        }
    }
}

impl From<wmink_core::Error> for CliError {
    fn from(e: wmink_core::Error) -> Self {
        use wmink_core::Error as E;
        let full = e.to_string();
        match e {
            E::InvalidDomain { invariant, detail } => CliError::parse(invariant, detail),
            E::Precondition { name, detail } => CliError::precondition(name, detail),
            E::Hemisphere { .. } => CliError::precondition("open_hemisphere", full),
            E::HemisphereExit { .. } => CliError::precondition("hemisphere_exit", full),
            E::Caustic { .. } => CliError::precondition("no_caustic", full),
            E::Domain(detail) => CliError::precondition("argument_domain", detail),
            E::Unsupported(detail) => CliError::precondition("supported_configuration", detail),
            E::Solver(detail) => CliError::Verification {
                invariant: "solver_consistency".into(),
                detail,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
