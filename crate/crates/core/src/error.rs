use std::fmt;
use std::path::PathBuf;

/// Everything that can go wrong inside the benchmark engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Integrity(String),

    #[error("{0}")]
    Shape(String),

    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("{0}")]
    Argument(String),

    #[error("{0}")]
    UndefinedMetric(String),

    #[error("iteration {iteration}: {message}")]
    Numeric { iteration: usize, message: String },

    #[error("missing files: {}", display_paths(.0))]
    Resolution(Vec<PathBuf>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("[{tag}] {source}")]
    Condition {
        tag: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Parse,
    Validation,
    Integrity,
    Shape,
    Decode,
    Argument,
    UndefinedMetric,
    Numeric,
    Resolution,
    Io,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Parse => "parse",
            Category::Validation => "validation",
            Category::Integrity => "integrity",
            Category::Shape => "shape",
            Category::Decode => "decode",
            Category::Argument => "argument",
            Category::UndefinedMetric => "undefined-metric",
            Category::Numeric => "numeric",
            Category::Resolution => "resolution",
            Category::Io => "io",
        }
    }

    /// Process exit code: 2 for failures reading or decoding files, 1 otherwise.
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Io | Category::Decode => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Parse { .. } => Category::Parse,
            Error::Validation(_) => Category::Validation,
            Error::Integrity(_) => Category::Integrity,
            Error::Shape(_) => Category::Shape,
            Error::Decode { .. } => Category::Decode,
            Error::Argument(_) => Category::Argument,
            Error::UndefinedMetric(_) => Category::UndefinedMetric,
            Error::Numeric { .. } => Category::Numeric,
            Error::Resolution(_) => Category::Resolution,
            Error::Io { .. } => Category::Io,
            Error::Condition { source, .. } => source.category(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl fmt::Display) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// Wraps the error with a `attack/model` style tag.
    pub fn in_condition(self, tag: impl Into<String>) -> Self {
        Error::Condition {
            tag: tag.into(),
            source: Box::new(self),
        }
    }
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
