use std::path::PathBuf;

use thiserror::Error;

use crate::graph::GraphError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numerical => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error at row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },
    #[error("validation error at row {row}, column '{column}': {message}")]
    Validation {
        row: usize,
        column: String,
        message: String,
    },
    #[error("no individuals are shared between the genotype and trait files")]
    EmptyJoin,
    #[error("{0}")]
    EmptyMatrix(String),
    #[error("column '{0}' has zero variance")]
    ZeroVariance(String),
    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("correlation submatrix is numerically singular over {0:?}")]
    NumericalRank(Vec<String>),
    #[error("rank-deficient design for node '{node}': collinear parents {parents:?}")]
    RankDeficient { node: String, parents: Vec<String> },
    #[error("matrix is singular: {0}")]
    Singular(String),
    #[error("matrix is not positive semidefinite: {what} has eigenvalue {eigenvalue:e}")]
    NotPsd { what: String, eigenvalue: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("evidence has no support: {0}")]
    InsufficientSupport(String),
    #[error("missing required column '{0}'")]
    MissingColumn(String),
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::NumericalRank(_)
            | Error::RankDeficient { .. }
            | Error::Singular(_)
            | Error::NotPsd { .. }
            | Error::InsufficientSupport(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
