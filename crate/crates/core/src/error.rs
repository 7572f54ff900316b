use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the toolkit.
///
/// The variants are grouped by failure class; [`Error::class`] maps each one
/// to a stable category that the command-line front end turns into an exit
/// code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: line {line}: {message}")]
    Format {
        context: String,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Json(String),

    #[error("index {index} out of range (len {len}): {context}")]
    Index {
        index: usize,
        len: usize,
        context: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rank deficient input: {0}")]
    Rank(String),

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    #[error("connectivity error: {0}")]
    Connectivity(String),

    #[error("numerical failure at {location}: {message}")]
    Numerical { location: String, message: String },

    #[error("geodesic on edge {from}-{to}: {source}")]
    Edge {
        from: String,
        to: String,
        #[source]
        source: Box<Error>,
    },

    #[error("layout error: {0}")]
    Layout(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Coarse failure category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Format,
    Layout,
    Numerical,
    Geometry,
    Parameter,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            line,
            message: message.into(),
        }
    }

    pub fn numerical(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numerical {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn dimension(expected: usize, got: usize, context: impl Into<String>) -> Self {
        Error::Dimension {
            expected,
            got,
            context: context.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Format { .. } | Error::Json(_) => ErrorClass::Format,
            Error::Layout(_) | Error::Dimension { .. } => ErrorClass::Layout,
            Error::Rank(_) | Error::Numerical { .. } | Error::Fit(_) => ErrorClass::Numerical,
            Error::Index { .. }
            | Error::Domain(_)
            | Error::EmptyResult(_)
            | Error::DegeneratePath(_)
            | Error::Connectivity(_)
            | Error::Alignment(_) => ErrorClass::Geometry,
            Error::Edge { source, .. } => source.class(),
            Error::Parameter(_) => ErrorClass::Parameter,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Json(_) => "json",
            Error::Index { .. } => "index",
            Error::Domain(_) => "domain",
            Error::Rank(_) => "rank",
            Error::EmptyResult(_) => "empty_result",
            Error::DegeneratePath(_) => "degenerate_path",
            Error::Connectivity(_) => "connectivity",
            Error::Numerical { .. } => "numerical",
            Error::Edge { .. } => "edge",
            Error::Layout(_) => "layout",
            Error::Dimension { .. } => "dimension",
            Error::Fit(_) => "fit",
            Error::Alignment(_) => "alignment",
            Error::Parameter(_) => "parameter",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
