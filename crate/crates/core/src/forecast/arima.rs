//! ARIMA(p,d,q) baseline on log counts: conditional sum of squares fits,
//! AICc order search and Gaussian intervals mapped back to counts.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::ar::{is_stationary, ols};
use crate::error::{Error, Result};

pub const MAX_P: usize = 2;
pub const MAX_D: usize = 2;
pub const MAX_Q: usize = 2;
/// First log-count index entering every candidate's sum of squares.
const COMMON_START: usize = MAX_P + MAX_D;
const VAR_FLOOR: f64 = 1e-12;
const INVALID: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl std::fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    /// Mean of the differenced series; absent for d = 2.
    pub mean: Option<f64>,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub sigma2: f64,
    pub css: f64,
    pub aicc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaBaseline {
    pub model: ArimaModel,
    /// `(order, AICc)` for every candidate that could be fitted.
    pub selection: Vec<(ArimaOrder, f64)>,
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Forecast standard deviation on the log scale.
    pub log_sd: Vec<f64>,
}

fn difference(y: &[f64], d: usize) -> Vec<f64> {
    let mut w = y.to_vec();
    for _ in 0..d {
        w = w.windows(2).map(|p| p[1] - p[0]).collect();
    }
    w
}

struct Spec<'a> {
    w: &'a [f64],
    order: ArimaOrder,
    constant: bool,
    /// First index of `w` whose residual is scored.
    score_from: usize,
}

impl Spec<'_> {
    fn unpack<'p>(&self, params: &'p [f64]) -> (f64, &'p [f64], &'p [f64]) {
        let off = usize::from(self.constant);
        let mean = if self.constant { params[0] } else { 0.0 };
        (mean, &params[off..off + self.order.p], &params[off + self.order.p..])
    }

    fn residuals(&self, params: &[f64]) -> Vec<f64> {
        let (mean, ar, ma) = self.unpack(params);
        let p = self.order.p;
        let mut e = vec![0.0; self.w.len()];
        for i in p..self.w.len() {
            let mut v = self.w[i] - mean;
            for (k, phi) in ar.iter().enumerate() {
                v -= phi * (self.w[i - 1 - k] - mean);
            }
            for (k, theta) in ma.iter().enumerate() {
                if i >= k + 1 + p {
                    v -= theta * e[i - 1 - k];
                }
            }
            e[i] = v;
        }
        e
    }

    fn css(&self, params: &[f64]) -> f64 {
        let (_, ar, ma) = self.unpack(params);
        let neg_ma: Vec<f64> = ma.iter().map(|t| -t).collect();
        if !is_stationary(ar) || !is_stationary(&neg_ma) {
            return INVALID;
        }
        let ss: f64 = self.residuals(params)[self.score_from..].iter().map(|e| e * e).sum();
        if ss.is_finite() { ss } else { INVALID }
    }

    fn n_params(&self) -> usize {
        usize::from(self.constant) + self.order.p + self.order.q
    }

    /// Hannan–Rissanen starting values.
    fn initial(&self) -> Vec<f64> {
        let (p, q) = (self.order.p, self.order.q);
        let w = self.w;
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let mut start = Vec::with_capacity(self.n_params());
        if self.constant {
            start.push(mean);
        }
        start.extend(std::iter::repeat_n(0.0, p + q));
        let centre = if self.constant { mean } else { 0.0 };
        let x: Vec<f64> = w.iter().map(|v| v - centre).collect();
        let long = (w.len() / 4).clamp(p.max(q) + 1, 8);
        let innovations = if q > 0 {
            if x.len() <= 2 * long + 2 {
                return start;
            }
            let design = DMatrix::from_fn(x.len() - long, long, |r, c| x[long + r - 1 - c]);
            let y = DVector::from_fn(x.len() - long, |r, _| x[long + r]);
            let Some((beta, _, _)) = ols(&design, &y) else { return start };
            let mut e = vec![0.0; x.len()];
            for t in long..x.len() {
                e[t] = x[t] - (0..long).map(|k| beta[k] * x[t - 1 - k]).sum::<f64>();
            }
            e
        } else {
            vec![0.0; x.len()]
        };
        let first = if q > 0 { long + q } else { p };
        if p + q == 0 || x.len() <= first + p + q + 1 {
            return start;
        }
        let rows = x.len() - first;
        let design = DMatrix::from_fn(rows, p + q, |r, c| {
            let t = first + r;
            if c < p { x[t - 1 - c] } else { innovations[t - 1 - (c - p)] }
        });
        let y = DVector::from_fn(rows, |r, _| x[first + r]);
        if let Some((beta, _, _)) = ols(&design, &y) {
            let off = usize::from(self.constant);
            for (i, b) in beta.iter().enumerate() {
                start[off + i] = *b;
            }
            if self.css(&start) >= INVALID {
                start[off..].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        start
    }
}

/// Derivative-free Nelder–Mead minimization.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], steps: &[f64], max_iter: usize) -> (Vec<f64>, f64) {
    let n = start.len();
    if n == 0 {
        return (Vec::new(), f(start));
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = (0..=n)
        .map(|i| {
            let mut x = start.to_vec();
            if i > 0 {
                x[i - 1] += steps[i - 1];
            }
            let v = f(&x);
            (x, v)
        })
        .collect();
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let spread = simplex.iter().skip(1).flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-14 * (1.0 + best.abs()) && spread < 1e-10 {
            break;
        }
        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect()
        };
        let refl = along(1.0);
        let fr = f(&refl);
        if fr < simplex[0].1 {
            let exp = along(2.0);
            let fe = f(&exp);
            simplex[n] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (refl, fr);
        } else {
            let (cand, fc) = if fr < simplex[n].1 {
                let c = along(0.5);
                let v = f(&c);
                (c, v)
            } else {
                let c = along(-0.5);
                let v = f(&c);
                (c, v)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (cand, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = item.0.iter().zip(&best_x).map(|(v, b)| b + 0.5 * (v - b)).collect();
                    let v = f(&x);
                    *item = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

/// Fits one ARIMA order to log counts `y` by conditional sum of squares.
pub fn fit_arima(y: &[f64], order: ArimaOrder) -> Option<ArimaModel> {
    if order.p > MAX_P || order.d > MAX_D || order.q > MAX_Q || y.len() <= COMMON_START + 2 {
        return None;
    }
    let w = difference(y, order.d);
    let spec = Spec { w: &w, order, constant: order.d <= 1, score_from: COMMON_START - order.d };
    let k = spec.n_params() + 1;
    let n_eff = (y.len() - COMMON_START) as f64;
    if n_eff - k as f64 - 1.0 <= 0.0 {
        return None;
    }
    let start = spec.initial();
    let sd = {
        let m = w.iter().sum::<f64>() / w.len() as f64;
        (w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / w.len() as f64).sqrt()
    };
    let mut steps = vec![0.1; start.len()];
    if spec.constant {
        steps[0] = 0.1 * sd + 1e-6;
    }
    let max_iter = 500 * (start.len() + 1);
    let (mut params, mut css) = nelder_mead(|x| spec.css(x), &start, &steps, max_iter);
    // A restart from the optimum guards against a collapsed simplex.
    if !params.is_empty() {
        let shrunk: Vec<f64> = steps.iter().map(|s| s * 0.1).collect();
        let (p2, c2) = nelder_mead(|x| spec.css(x), &params, &shrunk, max_iter);
        if c2 <= css {
            params = p2;
            css = c2;
        }
    }
    if css >= INVALID {
        return None;
    }
    let sigma2 = (css / n_eff).max(VAR_FLOOR);
    let loglik = -0.5 * n_eff * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    let kf = k as f64;
    let aicc = -2.0 * loglik + 2.0 * kf + 2.0 * kf * (kf + 1.0) / (n_eff - kf - 1.0);
    let (mean, ar, ma) = spec.unpack(&params);
    Some(ArimaModel {
        order,
        mean: spec.constant.then_some(mean),
        ar: ar.to_vec(),
        ma: ma.to_vec(),
        sigma2,
        css,
        aicc,
    })
}

impl ArimaModel {
    /// Point forecasts and standard deviations of log counts `1..=horizon`
    /// steps past the end of `y`.
    pub fn forecast_log(&self, y: &[f64], horizon: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.order.d;
        let w = difference(y, d);
        let mean = self.mean.unwrap_or(0.0);
        let mut params = Vec::new();
        if self.mean.is_some() {
            params.push(mean);
        }
        params.extend(&self.ar);
        params.extend(&self.ma);
        let spec = Spec { w: &w, order: self.order, constant: self.mean.is_some(), score_from: 0 };
        let mut e = spec.residuals(&params);
        let mut path = w.clone();
        for _ in 0..horizon {
            let n = path.len();
            let mut v = mean;
            for (k, phi) in self.ar.iter().enumerate() {
                v += phi * (path[n - 1 - k] - mean);
            }
            for (k, theta) in self.ma.iter().enumerate() {
                v += theta * e[n - 1 - k];
            }
            path.push(v);
            e.push(0.0);
        }
        let mut level: Vec<f64> = path[w.len()..].to_vec();
        for lvl in (0..d).rev() {
            let mut last = *difference(y, lvl).last().expect("non-empty series");
            for v in level.iter_mut() {
                last += *v;
                *v = last;
            }
        }
        let psi = self.psi_weights(horizon);
        let mut acc = 0.0;
        let sd = psi
            .iter()
            .map(|p| {
                acc += p * p;
                (self.sigma2 * acc).sqrt()
            })
            .collect();
        (level, sd)
    }

    /// MA(∞) weights of the integrated model, ψ₀ = 1.
    pub fn psi_weights(&self, n: usize) -> Vec<f64> {
        let mut poly = vec![1.0];
        poly.extend(self.ar.iter().map(|a| -a));
        for _ in 0..self.order.d {
            let mut next = vec![0.0; poly.len() + 1];
            for (i, c) in poly.iter().enumerate() {
                next[i] += c;
                next[i + 1] -= c;
            }
            poly = next;
        }
        let mut psi = vec![0.0; n];
        for j in 0..n {
            let mut v = if j == 0 { 1.0 } else { self.ma.get(j - 1).copied().unwrap_or(0.0) };
            for k in 1..poly.len().min(j + 1) {
                v -= poly[k] * psi[j - k];
            }
            psi[j] = v;
        }
        psi
    }
}

/// Searches all orders with p, q ≤ 2 and d ≤ 2 on log counts, keeps the
/// lowest AICc, and returns count-scale forecasts with `1 − alpha` intervals.
pub fn arima_baseline(counts: &[f64], horizon: usize, alpha: f64) -> Result<ArimaBaseline> {
    if counts.len() < 20 {
        return Err(Error::Forecast(format!("ARIMA baseline needs at least 20 values, got {}", counts.len())));
    }
    if let Some(i) = counts.iter().position(|&c| !(c > 0.0)) {
        return Err(Error::Forecast(format!("non-positive count {} at position {i}", counts[i])));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Forecast(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let y: Vec<f64> = counts.iter().map(|c| c.ln()).collect();
    let mut selection = Vec::new();
    let mut best: Option<ArimaModel> = None;
    for d in 0..=MAX_D {
        for p in 0..=MAX_P {
            for q in 0..=MAX_Q {
                let Some(m) = fit_arima(&y, ArimaOrder { p, d, q }) else { continue };
                selection.push((m.order, m.aicc));
                if best.as_ref().is_none_or(|b| m.aicc < b.aicc) {
                    best = Some(m);
                }
            }
        }
    }
    let model = best.ok_or_else(|| Error::Forecast("no ARIMA order could be fitted".into()))?;
    let (log_point, log_sd) = model.forecast_log(&y, horizon);
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - alpha / 2.0);
    Ok(ArimaBaseline {
        point: log_point.iter().map(|v| v.exp()).collect(),
        lower: log_point.iter().zip(&log_sd).map(|(m, s)| (m - z * s).exp()).collect(),
        upper: log_point.iter().zip(&log_sd).map(|(m, s)| (m + z * s).exp()).collect(),
        log_sd,
        model,
        selection,
    })
}
