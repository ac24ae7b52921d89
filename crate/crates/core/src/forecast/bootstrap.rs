//! Nonparametric bootstrap prediction intervals from in-sample forecast errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DRAWS: usize = 1000;
/// Multiplier search grid in hundredths.
const DELTA_MIN_PCT: usize = 50;
const DELTA_MAX_PCT: usize = 300;
const DELTA_MIN: f64 = 0.5;
const DELTA_MAX: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Lower and upper bootstrap error quantiles per grid point.
    pub eta_lower: Vec<f64>,
    pub eta_upper: Vec<f64>,
    pub delta_alpha: f64,
    /// Pooled in-sample coverage at `delta_alpha`.
    pub coverage: f64,
    /// False when no multiplier on the search grid reaches `1 − alpha`.
    pub calibrated: bool,
    /// True when every in-sample error is zero.
    pub degenerate: bool,
}

/// Linear-interpolation (type 7) sample quantile of sorted data.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise intervals `point + δ·η` where η are the α/2 and 1−α/2
/// quantiles of `draws` resampled errors and δ is the smallest multiplier in
/// {0.50, 0.51, …, 3.00} whose pooled in-sample coverage reaches `1 − alpha`.
/// Errors are `actual − forecast`.
pub fn bootstrap_interval(
    in_sample_errors: &[Vec<f64>],
    point_forecast: &[f64],
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<BootstrapInterval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Forecast(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if in_sample_errors.len() != point_forecast.len() {
        return Err(Error::Forecast("one error list per grid point is required".into()));
    }
    if in_sample_errors.iter().any(|e| e.len() < 2) {
        return Err(Error::Forecast("need at least 2 in-sample errors per grid point".into()));
    }
    if draws == 0 {
        return Err(Error::Forecast("bootstrap needs at least one draw".into()));
    }
    let degenerate = in_sample_errors.iter().flatten().all(|&e| e == 0.0);
    if degenerate {
        return Ok(BootstrapInterval {
            lower: point_forecast.to_vec(),
            upper: point_forecast.to_vec(),
            eta_lower: vec![0.0; point_forecast.len()],
            eta_upper: vec![0.0; point_forecast.len()],
            delta_alpha: DELTA_MIN,
            coverage: 1.0,
            calibrated: true,
            degenerate,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eta_lower = Vec::with_capacity(point_forecast.len());
    let mut eta_upper = Vec::with_capacity(point_forecast.len());
    for errors in in_sample_errors {
        let mut sample: Vec<f64> = (0..draws).map(|_| errors[rng.random_range(0..errors.len())]).collect();
        sample.sort_by(f64::total_cmp);
        eta_lower.push(quantile_type7(&sample, alpha / 2.0));
        eta_upper.push(quantile_type7(&sample, 1.0 - alpha / 2.0));
    }
    let total = in_sample_errors.iter().map(Vec::len).sum::<usize>() as f64;
    let coverage_at = |delta: f64| {
        in_sample_errors
            .iter()
            .enumerate()
            .map(|(j, errs)| {
                errs.iter().filter(|&&e| delta * eta_lower[j] <= e && e <= delta * eta_upper[j]).count()
            })
            .sum::<usize>() as f64
            / total
    };
    let mut chosen = None;
    for pct in DELTA_MIN_PCT..=DELTA_MAX_PCT {
        let delta = pct as f64 / 100.0;
        let cov = coverage_at(delta);
        if cov >= 1.0 - alpha - 1e-12 {
            chosen = Some((delta, cov));
            break;
        }
    }
    let calibrated = chosen.is_some();
    let (delta_alpha, coverage) = chosen.unwrap_or((DELTA_MAX, coverage_at(DELTA_MAX)));
    Ok(BootstrapInterval {
        lower: point_forecast.iter().zip(&eta_lower).map(|(p, e)| p + delta_alpha * e).collect(),
        upper: point_forecast.iter().zip(&eta_upper).map(|(p, e)| p + delta_alpha * e).collect(),
        eta_lower,
        eta_upper,
        delta_alpha,
        coverage,
        calibrated,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_matches_hand_values() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&x, 0.0), 1.0);
        assert_eq!(quantile_type7(&x, 1.0), 4.0);
        assert!((quantile_type7(&x, 0.1) - 1.3).abs() < 1e-12);
        assert!((quantile_type7(&x, 0.5) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zero_errors_collapse_to_point() {
        let b = bootstrap_interval(&vec![vec![0.0; 3]; 2], &[5.0, 6.0], 0.2, 1000, 1).unwrap();
        assert!(b.degenerate);
        assert_eq!(b.lower, vec![5.0, 6.0]);
        assert_eq!(b.upper, vec![5.0, 6.0]);
    }

    #[test]
    fn symmetric_errors_give_symmetric_band() {
        let e = 2.0;
        let errs = vec![vec![-e, e, -e, e]; 13];
        let point = vec![100.0; 13];
        let b = bootstrap_interval(&errs, &point, 0.2, 1000, 7).unwrap();
        assert!(b.calibrated);
        assert!(b.coverage >= 0.8);
        for j in 0..13 {
            assert!((b.eta_lower[j] + e).abs() < 1e-12 && (b.eta_upper[j] - e).abs() < 1e-12);
            assert!((b.upper[j] - 100.0 - b.delta_alpha * e).abs() < 1e-12);
            assert!((100.0 - b.lower[j] - b.delta_alpha * e).abs() < 1e-12);
        }
        assert_eq!(b.delta_alpha, 1.0);
    }

    #[test]
    fn calibration_reaches_target() {
        let errs: Vec<Vec<f64>> = (0..13).map(|j| vec![-3.0 - j as f64, 0.5, 1.0 + 0.1 * j as f64]).collect();
        let b = bootstrap_interval(&errs, &[0.0; 13], 0.2, 1000, 3).unwrap();
        assert!(b.calibrated);
        assert!(b.coverage >= 0.8);
        let same = bootstrap_interval(&errs, &[0.0; 13], 0.2, 1000, 3).unwrap();
        assert_eq!(b, same);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(bootstrap_interval(&[vec![1.0]], &[0.0], 0.2, 10, 1).is_err());
        assert!(bootstrap_interval(&[vec![1.0, 2.0]], &[0.0], 1.2, 10, 1).is_err());
        assert!(bootstrap_interval(&[vec![1.0, 2.0]], &[0.0, 1.0], 0.2, 10, 1).is_err());
    }
}
