use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("format error in {path}: field `{field}`: {message}")]
    Format {
        path: String,
        field: String,
        message: String,
    },

    #[error("degenerate volume: {0}")]
    DegenerateVolume(String),

    #[error("extraction exhausted for case `{case_id}`: {achieved} of {requested} patches after {attempts} attempts")]
    ExtractionExhausted {
        case_id: String,
        requested: usize,
        achieved: usize,
        attempts: usize,
    },

    #[error("manifest error at row {row}: {message}")]
    Manifest { row: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate})")]
    Divergence { epoch: usize, learning_rate: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("empty region of interest for case `{case_id}`")]
    EmptyRoi { case_id: String },

    #[error("degenerate labels: {0}")]
    DegenerateLabel(String),

    #[error("no convergence after {iterations} iterations (last max coefficient change {max_change:e})")]
    Convergence { iterations: usize, max_change: f64 },

    #[error("phantom generation failed: {0}")]
    Generation(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{} case(s) failed: {}", .0.len(), format_failures(.0))]
    CaseFailures(Vec<(String, String)>),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(
        path: impl AsRef<std::path::Path>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            field: field.into(),
            message: message.into(),
        }
    }
}

fn format_failures(failures: &[(String, String)]) -> String {
    failures
        .iter()
        .map(|(case, msg)| format!("{case}: {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}
