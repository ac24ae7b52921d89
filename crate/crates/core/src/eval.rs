//! Forecast accuracy: RMSFE, interval scores and the expanding-window
//! backtest comparing the FTS forecaster with the ARIMA baseline.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{arima_baseline, fts_forecast, FtsForecastConfig, IntervalConfig};
use crate::fts::{CurveKind, RegularFts};

/// Root mean squared forecast error per column of fold×j matrices.
pub fn rmsfe(actuals: &[Vec<f64>], forecasts: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_shape(actuals, forecasts)?;
    let folds = actuals.len() as f64;
    Ok((0..actuals[0].len())
        .map(|j| {
            (actuals.iter().zip(forecasts).map(|(a, f)| (a[j] - f[j]).powi(2)).sum::<f64>() / folds).sqrt()
        })
        .collect())
}

fn check_shape(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Eval("at least one fold is required".into()));
    }
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len() || x.len() != a[0].len()) {
        return Err(Error::Eval("actual and forecast shapes differ".into()));
    }
    Ok(())
}

/// Interval score: width plus `2/alpha` times any excursion of `actual`.
pub fn interval_score(lower: f64, upper: f64, actual: f64, alpha: f64) -> Result<f64> {
    if lower > upper {
        return Err(Error::Eval(format!("lower bound {lower} exceeds upper bound {upper}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Eval(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let mut s = upper - lower;
    if actual < lower {
        s += 2.0 / alpha * (lower - actual);
    }
    if actual > upper {
        s += 2.0 / alpha * (actual - upper);
    }
    Ok(s)
}

/// Mean over folds of a fold×j score matrix.
pub fn mean_interval_score(per_fold: &[Vec<f64>]) -> Result<Vec<f64>> {
    if per_fold.is_empty() {
        return Err(Error::Eval("at least one fold is required".into()));
    }
    let g = per_fold[0].len();
    if per_fold.iter().any(|r| r.len() != g) {
        return Err(Error::Eval("ragged score matrix".into()));
    }
    Ok((0..g).map(|j| per_fold.iter().map(|r| r[j]).sum::<f64>() / per_fold.len() as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestSpec {
    /// Training size, in curves, of the first fold.
    pub n_start: usize,
    pub alpha: f64,
    pub draws: usize,
    pub in_sample_folds: usize,
    pub seed: u64,
}

impl Default for BacktestSpec {
    fn default() -> Self {
        Self { n_start: 8, alpha: 0.2, draws: 1000, in_sample_folds: 3, seed: crate::DEFAULT_SEED }
    }
}

impl BacktestSpec {
    pub fn validate(&self, total: usize) -> Result<()> {
        if self.n_start < 1 || self.n_start >= total {
            return Err(Error::Eval(format!(
                "first training size {} must lie in 1..{total}",
                self.n_start
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Eval(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        Ok(())
    }

    fn intervals(&self) -> IntervalConfig {
        IntervalConfig { alpha: self.alpha, draws: self.draws, in_sample_folds: self.in_sample_folds, seed: self.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalForecast {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    /// Number of training curves.
    pub m: usize,
    pub dates: Vec<NaiveDate>,
    pub actual: Vec<f64>,
    pub fts: Option<IntervalForecast>,
    pub arima: Option<IntervalForecast>,
    pub failure: Option<String>,
}

impl Fold {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    /// `actual − forecast` of the FTS point forecast.
    pub fn fts_errors(&self) -> Option<Vec<f64>> {
        self.fts.as_ref().map(|f| self.actual.iter().zip(&f.point).map(|(a, p)| a - p).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub alpha: f64,
    pub folds: Vec<Fold>,
    pub rmsfe_fts: Vec<f64>,
    pub rmsfe_arima: Vec<f64>,
    pub score_fts: Vec<f64>,
    pub score_arima: Vec<f64>,
}

impl BacktestReport {
    pub fn successful_folds(&self) -> usize {
        self.folds.iter().filter(|f| f.succeeded()).count()
    }

    /// Rows `j,rmsfe_fts,rmsfe_arima`.
    pub fn rmsfe_csv(&self) -> String {
        table_csv("j,rmsfe_fts,rmsfe_arima", &self.rmsfe_fts, &self.rmsfe_arima)
    }

    /// Rows `j,score_fts,score_arima`.
    pub fn score_csv(&self) -> String {
        table_csv("j,score_fts,score_arima", &self.score_fts, &self.score_arima)
    }

    /// Grid points where the FTS value is at most the baseline value.
    pub fn fts_wins(a: &[f64], b: &[f64]) -> usize {
        a.iter().zip(b).filter(|(x, y)| x <= y).count()
    }
}

fn table_csv(header: &str, a: &[f64], b: &[f64]) -> String {
    let mut s = format!("{header}\n");
    for (j, (x, y)) in a.iter().zip(b).enumerate() {
        s.push_str(&format!("{},{},{}\n", j + 1, x, y));
    }
    s
}

/// Daily counts covered by the first `m` raw count curves, oldest first.
pub fn count_prefix(counts: &RegularFts, m: usize) -> Vec<f64> {
    let mut out = counts.curves[0].clone();
    for c in &counts.curves[1..m] {
        out.extend_from_slice(&c[counts.segment_length - counts.stride..]);
    }
    out
}

fn run_fold(counts: &RegularFts, m: usize, spec: &BacktestSpec, config: &FtsForecastConfig) -> Fold {
    let target = &counts.curves[m];
    let dates = (1..counts.grid_len()).map(|g| counts.date(m, g)).collect();
    let actual = target[1..].to_vec();
    let mut fold = Fold { m, dates, actual, fts: None, arima: None, failure: None };
    let horizon = counts.grid_len() - 1;
    let fts = counts
        .prefix(m)
        .and_then(|p| fts_forecast(&p, config, &spec.intervals(), 1))
        .map(|r| IntervalForecast { point: r.counts, lower: r.lower, upper: r.upper });
    let arima = arima_baseline(&count_prefix(counts, m), horizon, spec.alpha)
        .map(|b| IntervalForecast { point: b.point, lower: b.lower, upper: b.upper });
    let mut failures = Vec::new();
    match fts {
        Ok(f) => fold.fts = Some(f),
        Err(e) => failures.push(format!("fts: {e}")),
    }
    match arima {
        Ok(a) => fold.arima = Some(a),
        Err(e) => failures.push(format!("arima: {e}")),
    }
    if !failures.is_empty() {
        fold.failure = Some(failures.join("; "));
    }
    fold
}

fn scores(folds: &[&Fold], pick: impl Fn(&Fold) -> &IntervalForecast, alpha: f64) -> Result<Vec<Vec<f64>>> {
    folds
        .iter()
        .map(|f| {
            let band = pick(f);
            (0..f.actual.len())
                .map(|j| interval_score(band.lower[j], band.upper[j], f.actual[j], alpha))
                .collect()
        })
        .collect()
}

/// Expanding-window one-step backtest over training sizes `n_start..N−1`
/// of a raw count FTS. Failed folds are recorded and skipped.
pub fn expanding_window(
    counts: &RegularFts,
    spec: &BacktestSpec,
    config: &FtsForecastConfig,
) -> Result<BacktestReport> {
    if counts.kind != CurveKind::Counts {
        return Err(Error::Eval("backtest needs raw count curves".into()));
    }
    spec.validate(counts.len())?;
    let folds: Vec<Fold> = (spec.n_start..counts.len()).map(|m| run_fold(counts, m, spec, config)).collect();
    let ok: Vec<&Fold> = folds.iter().filter(|f| f.succeeded()).collect();
    if ok.is_empty() {
        let reasons: Vec<String> =
            folds.iter().map(|f| format!("m={}: {}", f.m, f.failure.clone().unwrap_or_default())).collect();
        return Err(Error::Eval(format!("every fold failed ({})", reasons.join(" | "))));
    }
    let actuals: Vec<Vec<f64>> = ok.iter().map(|f| f.actual.clone()).collect();
    let fts_points: Vec<Vec<f64>> = ok.iter().map(|f| f.fts.as_ref().expect("fts").point.clone()).collect();
    let arima_points: Vec<Vec<f64>> = ok.iter().map(|f| f.arima.as_ref().expect("arima").point.clone()).collect();
    let score_fts = mean_interval_score(&scores(&ok, |f| f.fts.as_ref().expect("fts"), spec.alpha)?)?;
    let score_arima = mean_interval_score(&scores(&ok, |f| f.arima.as_ref().expect("arima"), spec.alpha)?)?;
    Ok(BacktestReport {
        alpha: spec.alpha,
        rmsfe_fts: rmsfe(&actuals, &fts_points)?,
        rmsfe_arima: rmsfe(&actuals, &arima_points)?,
        score_fts,
        score_arima,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fts::segment;
    use chrono::Days;

    #[test]
    fn rmsfe_examples() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(rmsfe(&a, &a).unwrap(), vec![0.0, 0.0]);
        let r = rmsfe(&[vec![3.0], vec![4.0]], &[vec![0.0], vec![0.0]]).unwrap();
        assert!((r[0] - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((r[0] - 3.5355).abs() < 1e-4);
        let scaled = rmsfe(&[vec![30.0], vec![40.0]], &[vec![0.0], vec![0.0]]).unwrap();
        assert!((scaled[0] - 10.0 * r[0]).abs() < 1e-12);
        let swapped = rmsfe(&[vec![4.0], vec![3.0]], &[vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(r, swapped);
        assert!(rmsfe(&a, &a[..1]).is_err());
        assert!(rmsfe(&[], &[]).is_err());
    }

    #[test]
    fn interval_score_examples() {
        assert_eq!(interval_score(1.0, 3.0, 2.0, 0.2).unwrap(), 2.0);
        assert!((interval_score(1.0, 3.0, 3.5, 0.2).unwrap() - 7.0).abs() < 1e-12);
        assert!((interval_score(1.0, 3.0, 0.5, 0.2).unwrap() - 7.0).abs() < 1e-12);
        assert!(interval_score(3.0, 1.0, 2.0, 0.2).is_err());
        assert!(interval_score(1.0, 3.0, 2.0, 0.0).is_err());
        assert!(interval_score(0.5, 3.0, 2.0, 0.2).unwrap() > interval_score(1.0, 3.0, 2.0, 0.2).unwrap());
    }

    #[test]
    fn mean_score_examples() {
        assert_eq!(mean_interval_score(&[vec![1.0, 2.0]]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(mean_interval_score(&[vec![10.0], vec![20.0]]).unwrap(), vec![15.0]);
        assert!(mean_interval_score(&[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn score_bounds_width(lo in -100.0f64..100.0, w in 0.0f64..50.0, y in -200.0f64..200.0, alpha in 0.01f64..0.99) {
            let s = interval_score(lo, lo + w, y, alpha).unwrap();
            proptest::prop_assert!(s >= w - 1e-12);
            let miss = (lo - y).max(y - lo - w);
            if miss <= 0.0 {
                proptest::prop_assert!((s - w).abs() < 1e-12);
            } else {
                proptest::prop_assert!((s - w - 2.0 / alpha * miss).abs() < 1e-9);
            }
        }
    }

    fn synthetic(days: usize) -> RegularFts {
        let start = NaiveDate::from_ymd_opt(2020, 4, 4).unwrap();
        let dates: Vec<NaiveDate> = (0..days as u64).map(|i| start + Days::new(i)).collect();
        let mut c = 300_000.0;
        let counts: Vec<f64> = (0..days)
            .map(|i| {
                c *= 1.0 + 0.03 * (-(i as f64) / 50.0).exp() + 0.01;
                c
            })
            .collect();
        segment(&dates, &counts, 14, 13).unwrap()
    }

    #[test]
    fn eleven_curves_give_three_folds() {
        let fts = synthetic(144);
        let r = expanding_window(&fts, &BacktestSpec::default(), &FtsForecastConfig::default()).unwrap();
        assert_eq!(r.folds.len(), 3);
        assert_eq!(r.folds.iter().map(|f| f.m).collect::<Vec<_>>(), vec![8, 9, 10]);
        assert_eq!(r.successful_folds(), 3);
        assert_eq!(r.rmsfe_fts.len(), 13);
        assert!(r.rmsfe_fts.iter().chain(&r.rmsfe_arima).all(|&v| v >= 0.0));
        assert_eq!(r.folds[2].dates[12], NaiveDate::from_ymd_opt(2020, 8, 25).unwrap());
        assert!(r.rmsfe_csv().starts_with("j,rmsfe_fts,rmsfe_arima\n1,"));
        let again = expanding_window(&fts, &BacktestSpec::default(), &FtsForecastConfig::default()).unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn arima_prefix_ends_on_forecast_origin() {
        let fts = synthetic(144);
        let prefix = count_prefix(&fts, 8);
        assert_eq!(prefix.len(), 8 * 13 + 1);
        assert_eq!(*prefix.last().unwrap(), fts.curves[8][0]);
    }

    #[test]
    fn invalid_spec_rejected() {
        let fts = synthetic(144);
        let spec = BacktestSpec { n_start: 11, ..BacktestSpec::default() };
        assert!(expanding_window(&fts, &spec, &FtsForecastConfig::default()).is_err());
    }
}
