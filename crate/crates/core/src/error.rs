use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to parse {what}: {message}")]
    Parse { what: &'static str, message: String },

    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),

    #[error("{name} = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: String,
        expected: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid calibration: {0}")]
    Calibration(String),

    #[error("incomplete iteration: {} unanswered (video, question, iteration) slots, first: {}", gaps.len(), gaps.first().map(String::as_str).unwrap_or("-"))]
    IncompleteIteration { gaps: Vec<String> },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("no feasible plan: {0}")]
    Infeasible(String),

    #[error("insufficient gold positives: {0}")]
    Gold(String),

    #[error("too few workers for robust statistics: {found} < {required}")]
    TooFewWorkers { found: usize, required: usize },

    #[error("unknown {kind} `{id}`")]
    Unknown { kind: &'static str, id: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn out_of_range(
        name: &'static str,
        value: impl ToString,
        expected: impl ToString,
    ) -> Self {
        Error::OutOfRange {
            name,
            value: value.to_string(),
            expected: expected.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
