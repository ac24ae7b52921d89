//! Functional data analysis for epidemic case-count data.
//!
//! The crate covers the full pipeline from NYT-format case files to
//! forecasts: ingestion and per-million standardization ([`ingest`]),
//! local-linear smoothing ([`funcdata`]), PACE functional principal
//! components ([`fpca`]), functional canonical correlation ([`fcca`]),
//! Gaussian-mixture clustering of FPC scores ([`fclust`]), functional time
//! series with long-run covariance and dynamic FPCA ([`fts`]), score-based
//! forecasting with bootstrap intervals and an ARIMA baseline
//! ([`forecast`]), and backtest metrics ([`eval`]).

// Checks written as `!(x > 0.0)` reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod eval;
pub mod fcca;
pub mod fclust;
pub mod forecast;
pub mod fpca;
pub mod fts;
pub mod funcdata;
pub mod ingest;
pub mod linalg;
pub mod output;
pub mod pipeline;
pub mod plot;

pub use error::{Error, Result};
pub use funcdata::{GridCurve, IrregularFunctionalDataset, Subject};

/// Seed used by every stochastic step unless the caller overrides it.
pub const DEFAULT_SEED: u64 = 20200815;
