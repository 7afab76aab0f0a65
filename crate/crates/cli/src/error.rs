use std::process::ExitCode;

use serde_json::json;
use thiserror::Error;
use wfsearch_core::benchgen::BenchError;
use wfsearch_core::corpus::CorpusError;
use wfsearch_core::embed::EmbedError;
use wfsearch_core::engine::SearchError;
use wfsearch_core::evalharness::EvalError;
use wfsearch_core::rerank::ClientError;
use wfsearch_service::ServiceError;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation; exit 1.
    #[error("{message}")]
    Usage { code: &'static str, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn usage(code: &'static str, message: impl Into<String>) -> Self {
        CliError::Usage {
            code,
            message: message.into(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage { code, .. } => code,
            CliError::Corpus(e) => e.code(),
            CliError::Bench(e) => e.code(),
            CliError::Eval(e) => e.code(),
            CliError::Search(SearchError::NotBuilt(_)) => "method_unavailable",
            CliError::Search(_) => "search_error",
            CliError::Embed(_) => "embed_error",
            CliError::Client(_) => "llm_error",
            CliError::Service(e) => e.code(),
            CliError::Io(_) => "io_error",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage { .. } => 1,
            _ => 2,
        }
    }

    /// Prints the one-line JSON error to stderr and returns the exit code.
    pub fn report(&self) -> ExitCode {
        let line = json!({"error": {"code": self.code(), "message": self.to_string()}});
        eprintln!("{line}");
        ExitCode::from(self.exit_code())
    }
}
