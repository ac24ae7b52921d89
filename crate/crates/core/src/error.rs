use thiserror::Error;

/// Errors raised anywhere in the toolkit. Each variant is prefixed with the
/// module that produced it so CLI diagnostics stay attributable.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest: {0}")]
    Format(String),
    #[error("ingest: line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("ingest: regions missing from population map: {}", .0.join(", "))]
    MissingPopulation(Vec<String>),
    #[error("funcdata: {0}")]
    Data(String),
    #[error("smoother: {0}")]
    Smoothing(String),
    #[error("fpca: {0}")]
    Fpca(String),
    #[error("fcca: {0}")]
    Cca(String),
    #[error("fclust: {0}")]
    Cluster(String),
    #[error("fts: {0}")]
    Fts(String),
    #[error("forecast: {0}")]
    Forecast(String),
    #[error("eval: {0}")]
    Eval(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
