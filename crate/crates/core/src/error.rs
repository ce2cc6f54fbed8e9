use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValuationError {
    #[error("invariant violation: {}", .0.join("; "))]
    InvariantViolation(Vec<String>),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("unknown driver `{0}`")]
    UnknownDriver(String),
    #[error("insufficient history: {0} revenue observation(s), at least 2 required")]
    InsufficientHistory(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("{what} not found for {ticker}")]
    NotFound { ticker: String, what: String },
    #[error("schema violation: {}", .0.join("; "))]
    SchemaViolation(Vec<String>),
    #[error("provider error (retryable: {retryable}): {message}")]
    Provider { message: String, retryable: bool },
    #[error("no fixture for {ticker} as of {as_of}")]
    MissingFixture { ticker: String, as_of: String },
    #[error("invalid source selector `{0}`")]
    BadSource(String),
}

impl DataError {
    pub fn schema(msg: impl Into<String>) -> Self {
        DataError::SchemaViolation(vec![msg.into()])
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
    #[error("missing placeholder(s): {}", .0.join(", "))]
    MissingPlaceholder(Vec<String>),
    #[error("no scripted rule matches template `{template_id}`")]
    NoScriptMatch { template_id: String },
    #[error("backend `{backend}` unavailable after {attempts} attempt(s): {reason}")]
    BackendUnavailable {
        backend: String,
        attempts: u32,
        reason: String,
    },
    #[error("malformed output: {0}")]
    MalformedOutput(String),
    #[error("structured output violates schema `{schema}`: {detail}")]
    SchemaViolation { schema: String, detail: String },
    #[error("unknown schema `{0}`")]
    UnknownSchema(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("run `{0}` not found")]
    NotFound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Top-level error for pipeline entry points.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 data, 3 backend, 4 invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Data(_) | Error::Store(_) | Error::Io(_) | Error::Config(_) => 2,
            Error::Llm(_) => 3,
            Error::Valuation(ValuationError::InsufficientHistory(_)) => 2,
            Error::Valuation(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
