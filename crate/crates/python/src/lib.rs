//! Python bindings for the covfda pipeline.

use std::path::PathBuf;

use chrono::NaiveDate;
use covfda_core::config::parse_window;
use covfda_core::eval::{self, BacktestSpec};
use covfda_core::fcca::{canonical_scores, CcaConfig, CcaResult};
use covfda_core::fclust::{self, EmOptions, Features};
use covfda_core::forecast::{self, FtsForecastConfig, IntervalConfig};
use covfda_core::fpca::{fit_pace, FpcaConfig, FpcaModel};
use covfda_core::fts;
use covfda_core::funcdata::SmootherConfig;
use covfda_core::pipeline::{self, ClusterConfig, ClusterRun};
use covfda_core::IrregularFunctionalDataset;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: covfda_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Case records and populations loaded from disk.
#[pyclass(frozen)]
struct Inputs(pipeline::Inputs);

#[pymethods]
impl Inputs {
    /// Reads an NYT `date,state,fips,cases,deaths` file and an optional
    /// `state,population` file (bundled 2019 estimates otherwise).
    #[new]
    #[pyo3(signature = (cases, population=None))]
    fn new(cases: PathBuf, population: Option<PathBuf>) -> PyResult<Self> {
        pipeline::Inputs::load(&cases, population.as_deref()).map(Self).map_err(err)
    }

    #[getter]
    fn n_records(&self) -> usize {
        self.0.records.len()
    }

    /// `(date, cases)` national cumulative totals inside `window`.
    fn national(&self, window: &str) -> PyResult<(Vec<String>, Vec<f64>)> {
        let (d, c) = self.0.national(parse_window(window).map_err(err)?).map_err(err)?;
        Ok((d.iter().map(ToString::to_string).collect(), c))
    }
}

#[pyclass(frozen)]
struct Fpca(FpcaModel);

#[pymethods]
impl Fpca {
    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }
    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.0.grid.clone()
    }
    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.0.mean.values.clone()
    }
    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues.clone()
    }
    #[getter]
    fn eigenfunctions(&self) -> Vec<Vec<f64>> {
        self.0.eigenfunctions.iter().map(|c| c.values.clone()).collect()
    }
    #[getter]
    fn fve(&self) -> Vec<f64> {
        self.0.fve.clone()
    }
    #[getter]
    fn sigma2(&self) -> f64 {
        self.0.sigma2
    }
    #[getter]
    fn ids(&self) -> Vec<String> {
        self.0.subject_ids.clone()
    }
    #[getter]
    fn scores(&self) -> Vec<Vec<f64>> {
        self.0.scores.clone()
    }
    fn to_json(&self) -> PyResult<String> {
        json(&self.0)
    }
}

fn fpca_config(fve: f64) -> PyResult<FpcaConfig> {
    let c = FpcaConfig::with_fve(fve);
    c.validate().map_err(err)?;
    Ok(c)
}

/// PACE FPCA of daily new cases per million across states.
#[pyfunction]
#[pyo3(signature = (inputs, window="2020-01-21:2020-08-15", fve=0.9999))]
fn fpca(inputs: &Inputs, window: &str, fve: f64) -> PyResult<Fpca> {
    let w = parse_window(window).map_err(err)?;
    pipeline::run_fpca(&inputs.0, w, &SmootherConfig::default(), &fpca_config(fve)?).map(Fpca).map_err(err)
}

/// PACE FPCA of dense curves observed on a shared grid.
#[pyfunction]
#[pyo3(signature = (grid, rows, fve=0.9999))]
fn fpca_dense(grid: Vec<f64>, rows: Vec<Vec<f64>>, fve: f64) -> PyResult<Fpca> {
    let ids: Vec<String> = (0..rows.len()).map(|i| i.to_string()).collect();
    let data = IrregularFunctionalDataset::from_dense(&ids, &grid, &rows).map_err(err)?;
    fit_pace(&data, &SmootherConfig::default(), &fpca_config(fve)?).map(Fpca).map_err(err)
}

#[pyclass(frozen)]
struct Fcca(CcaResult);

#[pymethods]
impl Fcca {
    #[getter]
    fn correlations(&self) -> Vec<f64> {
        self.0.correlations.clone()
    }
    /// `(grid, u, v)` for the 1-based pair `k`.
    fn weights(&self, k: usize) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (u, v) = k
            .checked_sub(1)
            .and_then(|i| self.0.weight_functions.get(i))
            .ok_or_else(|| PyValueError::new_err(format!("pair {k} out of range")))?;
        Ok((u.grid.clone(), u.values.clone(), v.values.clone()))
    }
    /// `(state, x_score, y_score)` rows for the 1-based pair `k`.
    #[pyo3(signature = (k=1))]
    fn scores(&self, k: usize) -> PyResult<Vec<(String, f64, f64)>> {
        canonical_scores(&self.0, k).map_err(err)
    }
    fn to_json(&self) -> PyResult<String> {
        json(&self.0)
    }
}

/// Functional CCA between cumulative cases and deaths per million.
#[pyfunction]
#[pyo3(signature = (inputs, window="2020-04-01:2020-08-15", n_basis=25, ridge=1e-8))]
fn fcca(inputs: &Inputs, window: &str, n_basis: usize, ridge: f64) -> PyResult<Fcca> {
    let cfg = CcaConfig { n_basis, ridge, ..CcaConfig::default() };
    pipeline::run_fcca(&inputs.0, parse_window(window).map_err(err)?, &cfg).map(Fcca).map_err(err)
}

#[pyclass(frozen)]
struct Clusters(ClusterRun);

#[pymethods]
impl Clusters {
    #[getter]
    fn k(&self) -> usize {
        self.0.elbow.k_star
    }
    #[getter]
    fn ids(&self) -> Vec<String> {
        self.0.assignment.ids.clone()
    }
    /// Zero-based cluster labels aligned with `ids`.
    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.0.assignment.labels.clone()
    }
    #[getter]
    fn wcss(&self) -> Vec<f64> {
        self.0.elbow.wcss.clone()
    }
    #[getter]
    fn weak_elbow(&self) -> bool {
        self.0.elbow.weak_elbow
    }
    fn to_json(&self) -> PyResult<String> {
        json(&self.0)
    }
}

/// Mixture-model clustering of cumulative cases per million, K by elbow.
#[pyfunction]
#[pyo3(signature = (inputs, window="2020-04-01:2020-08-15", seed=covfda_core::DEFAULT_SEED, k_max=10))]
fn cluster(inputs: &Inputs, window: &str, seed: u64, k_max: usize) -> PyResult<Clusters> {
    let mut cfg = ClusterConfig { k_max, ..ClusterConfig::default() };
    cfg.em.seed = seed;
    pipeline::run_cluster(&inputs.0, parse_window(window).map_err(err)?, &SmootherConfig::default(), &cfg)
        .map(Clusters)
        .map_err(err)
}

/// Fits a `k`-component Gaussian mixture; returns `(labels, log-likelihood trace)`.
#[pyfunction]
#[pyo3(signature = (rows, k, seed=covfda_core::DEFAULT_SEED))]
fn gmm(rows: Vec<Vec<f64>>, k: usize, seed: u64) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let f = Features::from_rows(rows).map_err(err)?;
    let m = fclust::em_fit(&f, k, &EmOptions { seed, ..EmOptions::default() }).map_err(err)?;
    let labels = fclust::assign(&m, &f).map_err(err)?.labels;
    Ok((labels, m.loglik_trace))
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> f64 {
    fclust::adjusted_rand_index(&a, &b)
}

#[pyfunction]
#[pyo3(signature = (x, flat=0.5))]
fn flat_top_kernel(x: f64, flat: f64) -> PyResult<f64> {
    fts::flat_top_kernel(x, flat).map_err(err)
}

fn parse_dates(dates: &[String]) -> PyResult<Vec<NaiveDate>> {
    dates
        .iter()
        .map(|d| d.parse::<NaiveDate>().map_err(|e| PyValueError::new_err(format!("bad date {d:?}: {e}"))))
        .collect()
}

/// Overlapping segments of a daily cumulative series, anchored to its last day.
#[pyfunction]
#[pyo3(signature = (dates, counts, segment_length=14, stride=13))]
fn segment(dates: Vec<String>, counts: Vec<f64>, segment_length: usize, stride: usize) -> PyResult<Vec<Vec<f64>>> {
    fts::segment(&parse_dates(&dates)?, &counts, segment_length, stride).map(|f| f.curves).map_err(err)
}

#[pyclass(frozen)]
struct Forecast(forecast::ForecastResult);

#[pymethods]
impl Forecast {
    #[getter]
    fn dates(&self) -> Vec<String> {
        self.0.dates.iter().map(ToString::to_string).collect()
    }
    #[getter]
    fn point(&self) -> Vec<f64> {
        self.0.counts.clone()
    }
    #[getter]
    fn lower(&self) -> Vec<f64> {
        self.0.lower.clone()
    }
    #[getter]
    fn upper(&self) -> Vec<f64> {
        self.0.upper.clone()
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta_alpha
    }
    #[getter]
    fn calibrated(&self) -> bool {
        self.0.calibrated
    }
    fn to_csv(&self) -> String {
        self.0.to_csv(None)
    }
}

/// Next-segment FTS forecast of a daily cumulative series with bootstrap intervals.
#[pyfunction]
#[pyo3(signature = (dates, counts, alpha=0.2, seed=covfda_core::DEFAULT_SEED))]
fn forecast_counts(dates: Vec<String>, counts: Vec<f64>, alpha: f64, seed: u64) -> PyResult<Forecast> {
    let curves = fts::segment(&parse_dates(&dates)?, &counts, 14, 13).map_err(err)?;
    let intervals = IntervalConfig { alpha, seed, ..IntervalConfig::default() };
    forecast::fts_forecast(&curves, &FtsForecastConfig::default(), &intervals, 1).map(Forecast).map_err(err)
}

/// Expanding-window backtest of a daily cumulative series; returns
/// `(rmsfe_fts, rmsfe_arima, score_fts, score_arima)` per grid point.
#[pyfunction]
#[pyo3(signature = (dates, counts, n_start=8, alpha=0.2, seed=covfda_core::DEFAULT_SEED))]
#[allow(clippy::type_complexity)]
fn backtest(
    dates: Vec<String>,
    counts: Vec<f64>,
    n_start: usize,
    alpha: f64,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let curves = fts::segment(&parse_dates(&dates)?, &counts, 14, 13).map_err(err)?;
    let spec = BacktestSpec { n_start, alpha, seed, ..BacktestSpec::default() };
    let r = eval::expanding_window(&curves, &spec, &FtsForecastConfig::default()).map_err(err)?;
    Ok((r.rmsfe_fts, r.rmsfe_arima, r.score_fts, r.score_arima))
}

#[pyfunction]
fn rmsfe(actuals: Vec<Vec<f64>>, forecasts: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    eval::rmsfe(&actuals, &forecasts).map_err(err)
}

#[pyfunction]
fn interval_score(lower: f64, upper: f64, actual: f64, alpha: f64) -> PyResult<f64> {
    eval::interval_score(lower, upper, actual, alpha).map_err(err)
}

#[pymodule]
pub fn covfda(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Inputs>()?;
    m.add_class::<Fpca>()?;
    m.add_class::<Fcca>()?;
    m.add_class::<Clusters>()?;
    m.add_class::<Forecast>()?;
    m.add_function(wrap_pyfunction!(fpca, m)?)?;
    m.add_function(wrap_pyfunction!(fpca_dense, m)?)?;
    m.add_function(wrap_pyfunction!(fcca, m)?)?;
    m.add_function(wrap_pyfunction!(cluster, m)?)?;
    m.add_function(wrap_pyfunction!(gmm, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(flat_top_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(forecast_counts, m)?)?;
    m.add_function(wrap_pyfunction!(backtest, m)?)?;
    m.add_function(wrap_pyfunction!(rmsfe, m)?)?;
    m.add_function(wrap_pyfunction!(interval_score, m)?)?;
    m.add("DEFAULT_SEED", covfda_core::DEFAULT_SEED)?;
    Ok(())
}
