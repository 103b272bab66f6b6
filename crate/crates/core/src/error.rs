use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("outside supported domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("least-squares fit failed: {0}")]
    Fit(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("training diverged at iteration {iteration} (loss {loss:e})")]
    Divergence { iteration: usize, loss: f64 },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command line tool: 2 for configuration
    /// problems, 3 for numeric failures and divergence, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Numeric(_) | Error::Divergence { .. } | Error::Fit(_) | Error::Asymmetric(_) => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
