use thiserror::Error;

use crate::tree::Node;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// An operation would leave the truncated index tree.
    #[error("node {node} cannot be extended: truncation depth is {max_depth}")]
    Truncation { node: Node, max_depth: usize },

    /// A precondition on the arguments of an operation does not hold.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("resource limit exceeded: {what} needs about {estimate}, budget is {budget}")]
    Resource {
        what: String,
        estimate: u128,
        budget: u128,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("not a lattice: {x} and {y} have no {missing}")]
    NotALattice {
        x: String,
        y: String,
        missing: &'static str,
    },

    #[error("order violation: {0}")]
    OrderViolation(String),

    #[error("invalid lattice description: {0}")]
    Description(String),

    /// The labeling does not realize a decomposition pair it should. Always a construction bug.
    #[error("enumeration property violated: {0}")]
    Enumeration(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
