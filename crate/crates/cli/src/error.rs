use lexgraph::corpus::CorpusError;
use lexgraph::evaluation::MetricError;
use lexgraph::graph::GraphError;
use lexgraph::llm::LlmError;
use lexgraph::pipeline::PipelineError;
use lexgraph::researcher::ResearchError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    kind: &'a str,
    exit_code: i32,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Backend(_) => "backend",
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        let message = self.to_string();
        serde_json::to_string(&ErrorLine {
            error: &message,
            kind: self.kind(),
            exit_code: self.exit_code(),
        })
        .expect("error line serializes")
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Llm(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ResearchError> for CliError {
    fn from(e: ResearchError) -> Self {
        match e {
            ResearchError::Llm(e) | ResearchError::Graph(GraphError::Llm(e)) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_backend() {
            CliError::Backend(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}
