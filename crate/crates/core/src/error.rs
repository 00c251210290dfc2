use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value violates a model invariant.
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    /// No code strength up to the search limit meets the targets.
    #[error("infeasible: no t <= {t_max} satisfies the {binding} target")]
    Infeasible { binding: Constraint, t_max: u32 },

    /// Exact enumeration was asked for more blocks than it supports.
    #[error("enumeration size {n} exceeds the limit of {limit} blocks")]
    Size { n: u32, limit: u32 },

    /// Monte Carlo precondition not met (too few expected events).
    #[error("oracle precondition failed: {0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Which optimization target could not be met.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Due,
    Nde,
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Constraint::Due => "DUE",
            Constraint::Nde => "NDE",
        })
    }
}
