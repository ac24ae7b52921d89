//! Autoregressive models for FPC score series, order chosen by AIC.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub order: usize,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Innovation variance (residual sum of squares over the fitting sample).
    pub sigma2: f64,
    /// Standard errors of `[intercept, coefficients...]`.
    pub std_errors: Vec<f64>,
    /// `(order, AIC)` for every candidate considered.
    pub aic_table: Vec<(usize, f64)>,
}

impl ScoreModel {
    fn mean_model(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let sigma2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            order: 0,
            intercept: mean,
            coefficients: Vec::new(),
            sigma2,
            std_errors: vec![(sigma2 / n).sqrt()],
            aic_table: Vec::new(),
        }
    }

    /// Iterated forecasts `1..=horizon` steps past the end of `history`.
    pub fn forecast(&self, history: &[f64], horizon: usize) -> Vec<f64> {
        let mut path = history.to_vec();
        for _ in 0..horizon {
            let n = path.len();
            let next = self.intercept
                + self.coefficients.iter().enumerate().map(|(i, c)| c * path[n - 1 - i]).sum::<f64>();
            path.push(next);
        }
        path[history.len()..].to_vec()
    }

    /// Simulates `n` values after a burn-in, driven by standard normal draws.
    pub fn simulate(&self, innovations: &[f64], burn_in: usize) -> Vec<f64> {
        let p = self.order;
        let sd = self.sigma2.sqrt();
        let mut path = vec![0.0; p];
        for z in innovations {
            let n = path.len();
            let next = self.intercept
                + self.coefficients.iter().enumerate().map(|(i, c)| c * path[n - 1 - i]).sum::<f64>()
                + sd * z;
            path.push(next);
        }
        path.split_off(p + burn_in)
    }
}

/// True when all roots of `1 − φ₁z − … − φ_p z^p` lie outside the unit circle.
pub fn is_stationary(coefficients: &[f64]) -> bool {
    let p = coefficients.len();
    if p == 0 {
        return true;
    }
    if coefficients.iter().any(|c| !c.is_finite()) {
        return false;
    }
    let companion = DMatrix::from_fn(p, p, |i, j| {
        if i == 0 {
            coefficients[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion.complex_eigenvalues().iter().all(|z| z.norm() < 1.0 - 1e-10)
}

/// Ordinary least squares with intercept. Returns `(beta, rss, (XᵀX)⁻¹)`.
pub(crate) fn ols(design: &DMatrix<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, f64, DMatrix<f64>)> {
    let xtx = design.transpose() * design;
    let inv = xtx.clone().try_inverse()?;
    let beta = design.clone().svd(true, true).solve(y, 1e-12).ok()?;
    let rss = (y - design * &beta).norm_squared();
    Some((beta, rss, inv))
}

fn lag_design(x: &[f64], p: usize, start: usize) -> (DMatrix<f64>, DVector<f64>) {
    let rows = x.len() - start;
    let design = DMatrix::from_fn(rows, p + 1, |r, c| if c == 0 { 1.0 } else { x[start + r - c] });
    let y = DVector::from_fn(rows, |r, _| x[start + r]);
    (design, y)
}

/// Fits AR(p), p ≤ min(4, ⌊(N−1)/3⌋), by AIC on the common sample that
/// conditions on the largest candidate order. Non-stationary fits are skipped.
pub fn fit_ar(x: &[f64]) -> Result<ScoreModel> {
    let n = x.len();
    if n < 4 {
        return Err(Error::Forecast(format!("score series needs at least 4 values, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Forecast("non-finite score value".into()));
    }
    let base = ScoreModel::mean_model(x);
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if base.sigma2 <= (1e-14 * scale).powi(2) {
        return Ok(base);
    }
    let p_max = MAX_ORDER.min((n - 1) / 3);
    let n_eff = (n - p_max) as f64;
    let var_floor = 1e-12 * base.sigma2;
    let mut best: Option<(f64, ScoreModel)> = None;
    let mut table = Vec::new();
    for p in 0..=p_max {
        let (design, y) = lag_design(x, p, p_max);
        let Some((beta, rss, inv)) = ols(&design, &y) else { continue };
        let coefficients: Vec<f64> = beta.iter().skip(1).copied().collect();
        if !is_stationary(&coefficients) {
            continue;
        }
        let sigma2 = (rss / n_eff).max(var_floor);
        let aic = n_eff * sigma2.ln() + 2.0 * (p + 1) as f64;
        table.push((p, aic));
        let dof = (n_eff - (p + 1) as f64).max(1.0);
        let s2 = rss / dof;
        let model = ScoreModel {
            order: p,
            intercept: beta[0],
            coefficients,
            sigma2,
            std_errors: (0..=p).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect(),
            aic_table: Vec::new(),
        };
        if best.as_ref().is_none_or(|b| aic < b.0) {
            best = Some((aic, model));
        }
    }
    let mut model = best.map(|b| b.1).unwrap_or(base);
    model.aic_table = table;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let model = ScoreModel {
            order: 1,
            intercept: 0.0,
            coefficients: vec![phi],
            sigma2: 1.0,
            std_errors: vec![],
            aic_table: vec![],
        };
        model.simulate(&normals(n + 100, seed), 100)
    }

    #[test]
    fn constant_series_is_mean_model() {
        let m = fit_ar(&[2.5; 10]).unwrap();
        assert_eq!(m.order, 0);
        assert_eq!(m.forecast(&[2.5; 10], 3), vec![2.5; 3]);
    }

    #[test]
    fn ar1_one_step_tracks_closed_form() {
        // Least-squares slope of forecasts on the closed-form predictor.
        let (mut cross, mut sq) = (0.0, 0.0);
        for rep in 0..100 {
            let x = ar1(0.8, 500, rep);
            let f = fit_ar(&x).unwrap().forecast(&x, 1)[0];
            let target = 0.8 * x[x.len() - 1];
            cross += f * target;
            sq += target * target;
        }
        assert!((cross / sq - 1.0).abs() < 0.05, "{}", cross / sq);
    }

    #[test]
    fn white_noise_forecast_near_mean() {
        let x: Vec<f64> = normals(300, 3).iter().map(|z| 5.0 + z).collect();
        let m = fit_ar(&x).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let f = m.forecast(&x, 1)[0];
        assert!((f - mean).abs() < 2.0 * m.sigma2.sqrt());
    }

    #[test]
    fn order_capped_by_length() {
        let x = ar1(0.5, 10, 4);
        let m = fit_ar(&x).unwrap();
        assert!(m.aic_table.iter().all(|(p, _)| *p <= 3));
        assert!(fit_ar(&x[..3]).is_err());
    }

    #[test]
    fn refit_on_own_simulation_recovers_coefficients() {
        let x = ar1(0.6, 400, 5);
        let fitted = fit_ar(&x).unwrap();
        let sim = fitted.simulate(&normals(1100, 6), 100);
        let refit = fit_ar(&sim).unwrap();
        assert_eq!(refit.order, fitted.order);
        for (i, (a, b)) in fitted.coefficients.iter().zip(&refit.coefficients).enumerate() {
            assert!((a - b).abs() < 3.0 * refit.std_errors[i + 1], "{a} vs {b}");
        }
        assert!((fitted.intercept - refit.intercept).abs() < 3.0 * refit.std_errors[0]);
    }

    #[test]
    fn stationarity_check() {
        assert!(is_stationary(&[0.5]));
        assert!(!is_stationary(&[1.0]));
        assert!(!is_stationary(&[0.5, 0.6]));
        assert!(is_stationary(&[0.5, -0.3]));
    }
}
