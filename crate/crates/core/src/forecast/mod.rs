//! Curve forecasts from dynamic FPCA scores, reconstruction of cumulative
//! counts, bootstrap intervals and the ARIMA baseline.

pub mod ar;
pub mod arima;
pub mod bootstrap;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

pub use ar::{fit_ar, ScoreModel};
pub use arima::{arima_baseline, ArimaBaseline, ArimaModel, ArimaOrder};
pub use bootstrap::{bootstrap_interval, quantile_type7, BootstrapInterval};

use crate::error::{Error, Result};
use crate::fpca::FpcaConfig;
use crate::fts::{fit_dynamic_fpca, growth_rates, smooth_fts, CurveKind, DynamicFpcaModel, LrcConfig, RegularFts};
use crate::funcdata::{GridCurve, SmootherConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreForecast {
    pub values: Vec<f64>,
    pub models: Vec<ScoreModel>,
}

/// Fits an AR model to each score column (N×K input) and iterates it
/// `horizon` steps ahead.
pub fn forecast_scores(scores: &[Vec<f64>], horizon: usize) -> Result<ScoreForecast> {
    let n = scores.len();
    if n < 4 {
        return Err(Error::Forecast(format!("score forecasting needs at least 4 curves, got {n}")));
    }
    if horizon == 0 {
        return Err(Error::Forecast("horizon must be at least 1".into()));
    }
    let k = scores[0].len();
    if scores.iter().any(|s| s.len() != k) {
        return Err(Error::Forecast("ragged score table".into()));
    }
    let mut values = Vec::with_capacity(k);
    let mut models = Vec::with_capacity(k);
    for j in 0..k {
        let series: Vec<f64> = scores.iter().map(|s| s[j]).collect();
        let model = fit_ar(&series)?;
        values.push(model.forecast(&series, horizon)[horizon - 1]);
        models.push(model);
    }
    Ok(ScoreForecast { values, models })
}

/// Mean curve plus score-weighted eigenfunctions.
pub fn forecast_curve(model: &DynamicFpcaModel, score_forecasts: &[f64]) -> Result<GridCurve> {
    let fpca = &model.fpca;
    if score_forecasts.len() != fpca.k() {
        return Err(Error::Forecast(format!(
            "expected {} score forecasts, got {}",
            fpca.k(),
            score_forecasts.len()
        )));
    }
    let values = (0..fpca.grid.len())
        .map(|g| {
            let mut v = fpca.mean.values[g];
            for (s, phi) in score_forecasts.iter().zip(&fpca.eigenfunctions) {
                v += s * phi.values[g];
            }
            v
        })
        .collect();
    GridCurve::new(fpca.grid.clone(), values)
}

/// Cumulative counts `last·exp(Σ_{i≤j} r_i/100)` from daily growth rates.
pub fn reconstruct_counts(growth: &[f64], last_count: f64) -> Result<Vec<f64>> {
    if !(last_count > 0.0) {
        return Err(Error::Forecast(format!("last count must be positive, got {last_count}")));
    }
    let mut acc = 0.0;
    Ok(growth
        .iter()
        .map(|r| {
            acc += r / 100.0;
            last_count * acc.exp()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FtsForecastConfig {
    pub lrc: LrcConfig,
    pub fpca: FpcaConfig,
    /// Smooth growth curves with a pooled bandwidth before the FPCA.
    pub smooth: bool,
    pub smoother: SmootherConfig,
}

impl Default for FtsForecastConfig {
    fn default() -> Self {
        Self {
            lrc: LrcConfig::default(),
            fpca: FpcaConfig::default(),
            smooth: true,
            smoother: SmootherConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointForecast {
    pub horizon: usize,
    pub dates: Vec<NaiveDate>,
    pub growth_curve: GridCurve,
    pub counts: Vec<f64>,
    pub last_count: f64,
    pub k: usize,
    pub score_models: Vec<ScoreModel>,
}

/// Growth-rate FTS of a raw count FTS, smoothed when configured.
pub fn growth_fts(counts: &RegularFts, config: &FtsForecastConfig) -> Result<RegularFts> {
    let g = growth_rates(counts)?;
    if config.smooth { smooth_fts(&g, &config.smoother) } else { Ok(g) }
}

/// Forecast of the curve `horizon` segments past the last one of `counts`
/// (raw cumulative count curves), reconstructed into daily counts.
pub fn point_forecast(counts: &RegularFts, config: &FtsForecastConfig, horizon: usize) -> Result<PointForecast> {
    if counts.kind != CurveKind::Counts {
        return Err(Error::Forecast("point forecasts need raw count curves".into()));
    }
    let growth = growth_fts(counts, config)?;
    let model = fit_dynamic_fpca(&growth, &config.lrc, &config.fpca)?;
    let last_count = *counts.curves.last().and_then(|c| c.last()).ok_or_else(|| Error::Forecast("empty series".into()))?;
    let mut level = last_count;
    let mut result = None;
    for step in 1..=horizon {
        let scores = forecast_scores(model.scores(), step)?;
        let curve = forecast_curve(&model, &scores.values)?;
        let path = reconstruct_counts(&curve.values, level)?;
        level = *path.last().expect("non-empty grid");
        result = Some((curve, path, scores.models));
    }
    let (growth_curve, path, score_models) =
        result.ok_or_else(|| Error::Forecast("horizon must be at least 1".into()))?;
    let first_day = (counts.len() + horizon - 1) * counts.stride;
    let dates = growth
        .grid
        .iter()
        .map(|g| counts.origin_date + Days::new(first_day as u64 + g.round() as u64))
        .collect();
    Ok(PointForecast {
        horizon,
        dates,
        growth_curve,
        counts: path,
        last_count,
        k: model.k(),
        score_models,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub horizon: usize,
    pub dates: Vec<NaiveDate>,
    pub growth_curve: GridCurve,
    pub counts: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub delta_alpha: f64,
    pub alpha: f64,
    pub calibrated: bool,
    pub k: usize,
    /// Training sizes whose one-step forecasts supplied in-sample errors.
    pub in_sample_origins: Vec<usize>,
    /// In-sample errors `actual − forecast`, one list per grid point.
    pub in_sample_errors: Vec<Vec<f64>>,
}

impl ForecastResult {
    /// Rows `date,point,lower,upper[,actual]`.
    pub fn to_csv(&self, actual: Option<&[f64]>) -> String {
        let mut s = String::from(if actual.is_some() { "date,point,lower,upper,actual\n" } else { "date,point,lower,upper\n" });
        for j in 0..self.counts.len() {
            s.push_str(&format!("{},{},{},{}", self.dates[j], self.counts[j], self.lower[j], self.upper[j]));
            if let Some(a) = actual {
                s.push_str(&format!(",{}", a[j]));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntervalConfig {
    pub alpha: f64,
    pub draws: usize,
    /// Number of trailing one-step forecasts supplying in-sample errors.
    pub in_sample_folds: usize,
    pub seed: u64,
}

impl Default for IntervalConfig {
    fn default() -> Self {
        Self { alpha: 0.2, draws: bootstrap::DEFAULT_DRAWS, in_sample_folds: 3, seed: crate::DEFAULT_SEED }
    }
}

/// One-step in-sample errors from training sizes `m−folds..m−1`, each
/// forecasting its next observed curve. Failed origins are skipped.
pub fn in_sample_errors(
    counts: &RegularFts,
    config: &FtsForecastConfig,
    folds: usize,
) -> (Vec<usize>, Vec<Vec<f64>>) {
    let m = counts.len();
    let g = counts.grid_len() - 1;
    let mut origins = Vec::new();
    let mut errors = vec![Vec::new(); g];
    for size in m.saturating_sub(folds)..m {
        let Ok(prefix) = counts.prefix(size) else { continue };
        let Ok(f) = point_forecast(&prefix, config, 1) else { continue };
        let actual = &counts.curves[size][1..];
        for j in 0..g {
            errors[j].push(actual[j] - f.counts[j]);
        }
        origins.push(size);
    }
    (origins, errors)
}

/// One-step (or `horizon`-step) forecast from all curves with bootstrap
/// intervals calibrated on trailing in-sample errors.
pub fn fts_forecast(
    counts: &RegularFts,
    config: &FtsForecastConfig,
    intervals: &IntervalConfig,
    horizon: usize,
) -> Result<ForecastResult> {
    let point = point_forecast(counts, config, horizon)?;
    let (origins, errors) = in_sample_errors(counts, config, intervals.in_sample_folds);
    if origins.len() < 2 {
        return Err(Error::Forecast(format!(
            "only {} in-sample forecasts succeeded; at least 2 are needed for intervals",
            origins.len()
        )));
    }
    let band = bootstrap_interval(&errors, &point.counts, intervals.alpha, intervals.draws, intervals.seed)?;
    Ok(ForecastResult {
        horizon,
        dates: point.dates,
        growth_curve: point.growth_curve,
        counts: point.counts,
        lower: band.lower,
        upper: band.upper,
        delta_alpha: band.delta_alpha,
        alpha: intervals.alpha,
        calibrated: band.calibrated,
        k: point.k,
        in_sample_origins: origins,
        in_sample_errors: errors,
    })
}
