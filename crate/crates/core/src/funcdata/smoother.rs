//! Local-linear scatterplot and surface smoothers with GCV bandwidth choice.
//!
//! Observations are aggregated by location before fitting (exact duplicates
//! in one dimension, exact or binned cells in two), so dense designs with many
//! repeated time points cost O(unique locations) per local fit. Each cell keeps
//! its count, mean and within-cell sum of squares, which is all GCV needs.

use std::collections::HashMap;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of candidate bandwidths scanned by GCV.
const GCV_CANDIDATES: usize = 30;
/// Per-axis cap on distinct surface locations before binning kicks in.
pub(crate) const SURFACE_MAX_BINS: usize = 101;
/// Safety margin applied to the smallest feasible bandwidth.
const FEASIBLE_MARGIN: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Epanechnikov,
}

impl Kernel {
    #[inline]
    pub fn weight(self, u: f64) -> f64 {
        match self {
            Kernel::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Smoothing bandwidth: explicit, or chosen by generalized cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "BandwidthRepr", try_from = "BandwidthRepr")]
pub enum Bandwidth {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BandwidthRepr {
    Value(f64),
    Name(String),
}

impl From<Bandwidth> for BandwidthRepr {
    fn from(b: Bandwidth) -> Self {
        match b {
            Bandwidth::Auto => BandwidthRepr::Name("auto".into()),
            Bandwidth::Fixed(h) => BandwidthRepr::Value(h),
        }
    }
}

impl TryFrom<BandwidthRepr> for Bandwidth {
    type Error = String;
    fn try_from(r: BandwidthRepr) -> std::result::Result<Self, String> {
        match r {
            BandwidthRepr::Value(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
            BandwidthRepr::Value(h) => Err(format!("bandwidth must be positive, got {h}")),
            BandwidthRepr::Name(s) if s.eq_ignore_ascii_case("auto") => Ok(Bandwidth::Auto),
            BandwidthRepr::Name(s) => s
                .parse::<f64>()
                .map_err(|_| format!("bandwidth must be a number or \"auto\", got {s:?}"))
                .and_then(|h| BandwidthRepr::Value(h).try_into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmootherConfig {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    pub grid_size: usize,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self { kernel: Kernel::Epanechnikov, bandwidth: Bandwidth::Auto, grid_size: 51 }
    }
}

impl SmootherConfig {
    pub fn with_bandwidth(h: f64) -> Self {
        Self { bandwidth: Bandwidth::Fixed(h), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Smoothing(format!("bandwidth must be positive, got {h}")));
            }
        }
        if self.grid_size < 2 {
            return Err(Error::Smoothing("grid_size must be at least 2".into()));
        }
        Ok(())
    }
}

/// Result of [`smooth_curve`].
#[derive(Debug, Clone)]
pub struct CurveSmooth {
    pub curve: super::GridCurve,
    pub bandwidth: f64,
    /// Set when the requested bandwidth was too small and had to be widened.
    pub widened: bool,
}

/// Result of [`smooth_surface`].
#[derive(Debug, Clone)]
pub struct SurfaceSmooth {
    pub values: DMatrix<f64>,
    pub bandwidth: f64,
    pub widened: bool,
}

/// Online count/mean/sum-of-squares accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, y: f64) {
        self.n += 1.0;
        let d = y - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (y - self.mean);
    }
}

/// Local-linear smoother in one dimension, fitted to aggregated data.
#[derive(Debug, Clone)]
pub struct LocalLinear1d {
    kernel: Kernel,
    t: Vec<f64>,
    w: Vec<f64>,
    mean: Vec<f64>,
    ss: Vec<f64>,
    offset: f64,
    bandwidth: f64,
    widened: bool,
}

impl LocalLinear1d {
    /// Fits the smoother. `queries` lists every location the caller intends
    /// to evaluate; the bandwidth is widened until all of them are feasible.
    pub fn fit(points: &[(f64, f64)], config: &SmootherConfig, queries: &[f64]) -> Result<Self> {
        config.validate()?;
        if points.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
            return Err(Error::Smoothing("non-finite input".into()));
        }
        let offset = points.iter().map(|p| p.1).sum::<f64>() / points.len().max(1) as f64;
        let mut sorted: Vec<(f64, f64)> = points.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut t, mut w, mut mean, mut ss) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut i = 0;
        while i < sorted.len() {
            let ti = sorted[i].0;
            let mut m = Moments::default();
            while i < sorted.len() && sorted[i].0 == ti {
                m.push(sorted[i].1 - offset);
                i += 1;
            }
            t.push(ti);
            w.push(m.n);
            mean.push(m.mean);
            ss.push(m.m2.max(0.0));
        }
        if t.len() < 2 {
            return Err(Error::Smoothing("need at least 2 distinct times".into()));
        }
        let mut model = Self {
            kernel: config.kernel,
            t,
            w,
            mean,
            ss,
            offset,
            bandwidth: f64::NAN,
            widened: false,
        };
        let mut all_queries = model.t.clone();
        all_queries.extend_from_slice(queries);
        let h_min = model.min_feasible_bandwidth(&all_queries);
        match config.bandwidth {
            Bandwidth::Fixed(h) => {
                if h < h_min {
                    model.bandwidth = h_min;
                    model.widened = true;
                } else {
                    model.bandwidth = h;
                }
            }
            Bandwidth::Auto => {
                let span = model.t[model.t.len() - 1] - model.t[0];
                let h_max = span.max(h_min * 2.0);
                let ratio = (h_max / h_min).powf(1.0 / (GCV_CANDIDATES - 1) as f64);
                let mut best = (f64::INFINITY, h_max);
                let mut h = h_min;
                for _ in 0..GCV_CANDIDATES {
                    let score = model.gcv_score(h);
                    if score < best.0 {
                        best = (score, h);
                    }
                    h *= ratio;
                }
                model.bandwidth = best.1;
            }
        }
        Ok(model)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn widened(&self) -> bool {
        self.widened
    }

    /// Smallest bandwidth with at least two distinct design points strictly
    /// inside every query window, times a small margin.
    fn min_feasible_bandwidth(&self, queries: &[f64]) -> f64 {
        let t = &self.t;
        let mut worst: f64 = 0.0;
        for &q in queries {
            let pos = t.partition_point(|&x| x < q);
            let mut d: Vec<f64> = (pos.saturating_sub(2)..(pos + 2).min(t.len()))
                .map(|i| (t[i] - q).abs())
                .collect();
            d.sort_by(f64::total_cmp);
            worst = worst.max(d[1]);
        }
        worst * FEASIBLE_MARGIN
    }

    /// Local-linear estimate and the hat-matrix diagonal of a unit-weight
    /// observation located at `x`; `None` when the local design is singular.
    fn fit_at(&self, x: f64, h: f64) -> Option<(f64, f64)> {
        let lo = self.t.partition_point(|&t| t <= x - h);
        let hi = self.t.partition_point(|&t| t < x + h);
        let (mut s0, mut s1, mut s2, mut sy, mut sdy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in lo..hi {
            let d = (self.t[i] - x) / h;
            let k = self.kernel.weight(d) * self.w[i];
            if k == 0.0 {
                continue;
            }
            s0 += k;
            s1 += k * d;
            s2 += k * d * d;
            sy += k * self.mean[i];
            sdy += k * d * self.mean[i];
        }
        let det = s0 * s2 - s1 * s1;
        if !(s0 > 0.0) || det <= 1e-10 * s0 * s2 {
            return None;
        }
        let est = (s2 * sy - s1 * sdy) / det;
        let hat = self.kernel.weight(0.0) * s2 / det;
        Some((est, hat))
    }

    /// Generalized cross-validation score N·RSS/(N − tr H)².
    pub fn gcv_score(&self, h: f64) -> f64 {
        let total: f64 = self.w.iter().sum();
        let (mut rss, mut tr) = (0.0, 0.0);
        for i in 0..self.t.len() {
            match self.fit_at(self.t[i], h) {
                Some((f, hat)) => {
                    let r = self.mean[i] - f;
                    rss += self.ss[i] + self.w[i] * r * r;
                    tr += self.w[i] * hat;
                }
                None => return f64::INFINITY,
            }
        }
        let dof = total - tr;
        if dof <= 1e-8 * total {
            return f64::INFINITY;
        }
        total * rss / (dof * dof)
    }

    /// Evaluates the fit at `x`, widening locally if the window is too thin.
    pub fn eval(&self, x: f64) -> f64 {
        let mut h = self.bandwidth;
        for _ in 0..200 {
            if let Some((f, _)) = self.fit_at(x, h) {
                return f + self.offset;
            }
            h *= 1.25;
        }
        f64::NAN
    }

    pub fn eval_many(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

/// Local-linear regression of `(time, value)` points evaluated on `out_grid`.
pub fn smooth_curve(
    points: &[(f64, f64)],
    config: &SmootherConfig,
    out_grid: &[f64],
) -> Result<CurveSmooth> {
    let model = LocalLinear1d::fit(points, config, out_grid)?;
    let values = model.eval_many(out_grid);
    Ok(CurveSmooth {
        curve: super::GridCurve::new(out_grid.to_vec(), values)?,
        bandwidth: model.bandwidth(),
        widened: model.widened(),
    })
}

/// Aggregated bivariate design: cells sorted by their `s` coordinate.
#[derive(Debug, Clone)]
struct Cells {
    s: Vec<f64>,
    t: Vec<f64>,
    w: Vec<f64>,
    mean: Vec<f64>,
    ss: Vec<f64>,
    offset: f64,
}

impl Cells {
    fn build(points: &[(f64, f64, f64)], max_bins: usize) -> Result<Self> {
        if points.iter().any(|(s, t, v)| !s.is_finite() || !t.is_finite() || !v.is_finite()) {
            return Err(Error::Smoothing("non-finite surface input".into()));
        }
        let offset = points.iter().map(|p| p.2).sum::<f64>() / points.len().max(1) as f64;
        let axis = |f: fn(&(f64, f64, f64)) -> f64| {
            let mut u: Vec<f64> = points.iter().map(f).collect();
            u.sort_by(f64::total_cmp);
            u.dedup();
            u
        };
        let us = axis(|p| p.0);
        let ut = axis(|p| p.1);
        let exact = us.len() <= max_bins && ut.len() <= max_bins;
        let binner = |u: &[f64], x: f64| -> usize {
            if exact {
                u.partition_point(|&v| v < x)
            } else {
                let (lo, hi) = (u[0], u[u.len() - 1]);
                if hi <= lo {
                    0
                } else {
                    (((x - lo) / (hi - lo)) * max_bins as f64).floor().min((max_bins - 1) as f64)
                        as usize
                }
            }
        };
        // cell -> (moments, Σs, Σt)
        let mut acc: HashMap<(usize, usize), (Moments, f64, f64)> = HashMap::new();
        for &(s, t, v) in points {
            let key = (binner(&us, s), binner(&ut, t));
            let e = acc.entry(key).or_default();
            e.0.push(v - offset);
            e.1 += s;
            e.2 += t;
        }
        let mut cells: Vec<(f64, f64, Moments)> =
            acc.into_values().map(|(m, ss, st)| (ss / m.n, st / m.n, m)).collect();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        Ok(Self {
            s: cells.iter().map(|c| c.0).collect(),
            t: cells.iter().map(|c| c.1).collect(),
            w: cells.iter().map(|c| c.2.n).collect(),
            mean: cells.iter().map(|c| c.2.mean).collect(),
            ss: cells.iter().map(|c| c.2.m2.max(0.0)).collect(),
            offset,
        })
    }

    fn check_design(&self) -> Result<()> {
        let total: f64 = self.w.iter().sum();
        let ms = self.s.iter().zip(&self.w).map(|(s, w)| s * w).sum::<f64>() / total;
        let mt = self.t.iter().zip(&self.w).map(|(t, w)| t * w).sum::<f64>() / total;
        let (mut vss, mut vtt, mut vst) = (0.0, 0.0, 0.0);
        for i in 0..self.s.len() {
            let (ds, dt) = (self.s[i] - ms, self.t[i] - mt);
            vss += self.w[i] * ds * ds;
            vtt += self.w[i] * dt * dt;
            vst += self.w[i] * ds * dt;
        }
        if self.s.len() < 4 || vss <= 0.0 || vtt <= 0.0 || vss * vtt - vst * vst <= 1e-10 * vss * vtt
        {
            return Err(Error::Smoothing(
                "degenerate surface design: locations are collinear or too few".into(),
            ));
        }
        Ok(())
    }

    fn fit_at(&self, kernel: Kernel, x: f64, y: f64, h: f64) -> Option<(f64, f64)> {
        let lo = self.s.partition_point(|&s| s <= x - h);
        let hi = self.s.partition_point(|&s| s < x + h);
        let mut m = Matrix3::<f64>::zeros();
        let mut b = Vector3::<f64>::zeros();
        for i in lo..hi {
            let dt = (self.t[i] - y) / h;
            if dt.abs() >= 1.0 {
                continue;
            }
            let ds = (self.s[i] - x) / h;
            let k = kernel.weight(ds) * kernel.weight(dt) * self.w[i];
            if k == 0.0 {
                continue;
            }
            let z = Vector3::new(1.0, ds, dt);
            m += k * z * z.transpose();
            b += k * self.mean[i] * z;
        }
        let scale = m[(0, 0)] * m[(1, 1)] * m[(2, 2)];
        if !(scale > 0.0) || m.determinant() <= 1e-10 * scale {
            return None;
        }
        let inv = m.try_inverse()?;
        let est = (inv * b)[0];
        let k0 = kernel.weight(0.0);
        Some((est, k0 * k0 * inv[(0, 0)]))
    }

    fn feasible(&self, kernel: Kernel, queries: &[(f64, f64)], h: f64) -> bool {
        queries.iter().all(|&(x, y)| self.fit_at(kernel, x, y, h).is_some())
    }

    fn span(&self) -> f64 {
        let (smin, smax) = (self.s[0], self.s[self.s.len() - 1]);
        let tmin = self.t.iter().copied().fold(f64::INFINITY, f64::min);
        let tmax = self.t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (smax - smin).max(tmax - tmin)
    }

    fn min_feasible_bandwidth(&self, kernel: Kernel, queries: &[(f64, f64)]) -> Result<f64> {
        let mut hi = 2.0 * self.span();
        if !self.feasible(kernel, queries, hi) {
            hi *= 4.0;
            if !self.feasible(kernel, queries, hi) {
                return Err(Error::Smoothing("no feasible surface bandwidth".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if self.feasible(kernel, queries, mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-4 * hi {
                break;
            }
        }
        Ok(hi * FEASIBLE_MARGIN)
    }

    fn gcv_score(&self, kernel: Kernel, h: f64) -> f64 {
        let total: f64 = self.w.iter().sum();
        let (mut rss, mut tr) = (0.0, 0.0);
        for i in 0..self.s.len() {
            match self.fit_at(kernel, self.s[i], self.t[i], h) {
                Some((f, hat)) => {
                    let r = self.mean[i] - f;
                    rss += self.ss[i] + self.w[i] * r * r;
                    tr += self.w[i] * hat;
                }
                None => return f64::INFINITY,
            }
        }
        let dof = total - tr;
        if dof <= 1e-8 * total {
            return f64::INFINITY;
        }
        total * rss / (dof * dof)
    }
}

/// Bivariate local-linear smooth of `(s, t, value)` points on
/// `out_grid × out_grid`, symmetrized as (M + Mᵀ)/2.
pub fn smooth_surface(
    points: &[(f64, f64, f64)],
    config: &SmootherConfig,
    out_grid: &[f64],
) -> Result<SurfaceSmooth> {
    config.validate()?;
    let cells = Cells::build(points, SURFACE_MAX_BINS)?;
    cells.check_design()?;
    let kernel = config.kernel;
    let grid_pairs: Vec<(f64, f64)> =
        out_grid.iter().flat_map(|&x| out_grid.iter().map(move |&y| (x, y))).collect();
    let mut queries = grid_pairs.clone();
    queries.extend(cells.s.iter().copied().zip(cells.t.iter().copied()));
    let h_min = cells.min_feasible_bandwidth(kernel, &queries)?;
    let (bandwidth, widened) = match config.bandwidth {
        Bandwidth::Fixed(h) if h >= h_min => (h, false),
        Bandwidth::Fixed(_) => (h_min, true),
        Bandwidth::Auto => {
            let h_max = cells.span().max(2.0 * h_min);
            let ratio = (h_max / h_min).powf(1.0 / (GCV_CANDIDATES - 1) as f64);
            let mut best = (f64::INFINITY, h_max);
            let mut h = h_min;
            for _ in 0..GCV_CANDIDATES {
                let score = cells.gcv_score(kernel, h);
                if score < best.0 {
                    best = (score, h);
                }
                h *= ratio;
            }
            (best.1, false)
        }
    };
    let g = out_grid.len();
    let mut values = DMatrix::<f64>::zeros(g, g);
    for i in 0..g {
        for j in 0..g {
            let (f, _) = cells
                .fit_at(kernel, out_grid[i], out_grid[j], bandwidth)
                .ok_or_else(|| Error::Smoothing("surface fit became singular".into()))?;
            values[(i, j)] = f + cells.offset;
        }
    }
    let sym = (&values + values.transpose()) * 0.5;
    Ok(SurfaceSmooth { values: sym, bandwidth, widened })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcdata::uniform_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn constant_data_is_reproduced() {
        let pts: Vec<(f64, f64)> = (0..30).map(|i| (i as f64 / 29.0, 4.2)).collect();
        let grid = uniform_grid(0.0, 1.0, 11);
        let fit = smooth_curve(&pts, &SmootherConfig::default(), &grid).unwrap();
        for v in fit.curve.values {
            assert!((v - 4.2).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_data_is_reproduced() {
        let pts: Vec<(f64, f64)> =
            (0..25).map(|i| i as f64 / 24.0).map(|t| (t, 2.0 + 3.0 * t)).collect();
        let grid = uniform_grid(0.0, 1.0, 17);
        for cfg in [SmootherConfig::default(), SmootherConfig::with_bandwidth(0.2)] {
            let fit = smooth_curve(&pts, &cfg, &grid).unwrap();
            for (x, v) in grid.iter().zip(&fit.curve.values) {
                assert!((v - (2.0 + 3.0 * x)).abs() < 1e-10, "{x}: {v}");
            }
        }
    }

    #[test]
    fn noisy_sine_recovered_with_gcv() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.2).unwrap();
        let pts: Vec<(f64, f64)> = (0..100)
            .map(|i| i as f64 / 99.0)
            .map(|t| (t, (2.0 * std::f64::consts::PI * t).sin() + noise.sample(&mut rng)))
            .collect();
        let grid = uniform_grid(0.0, 1.0, 51);
        let fit = smooth_curve(&pts, &SmootherConfig::default(), &grid).unwrap();
        let mse: f64 = grid
            .iter()
            .zip(&fit.curve.values)
            .map(|(t, v)| (v - (2.0 * std::f64::consts::PI * t).sin()).powi(2))
            .sum::<f64>()
            / grid.len() as f64;
        assert!(mse.sqrt() < 0.2, "rmse {}", mse.sqrt());
    }

    #[test]
    fn identical_times_rejected() {
        let pts = vec![(1.0, 2.0), (1.0, 3.0), (1.0, 4.0)];
        assert!(smooth_curve(&pts, &SmootherConfig::default(), &[1.0]).is_err());
    }

    #[test]
    fn tiny_bandwidth_is_widened_and_flagged() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, i as f64 * 0.5)).collect();
        let fit = smooth_curve(&pts, &SmootherConfig::with_bandwidth(1e-3), &[0.0, 4.5, 9.0])
            .unwrap();
        assert!(fit.widened);
        assert!(fit.bandwidth > 1.0);
        assert!((fit.curve.values[1] - 2.25).abs() < 1e-10);
    }

    #[test]
    fn gcv_bandwidth_invariant_to_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<(f64, f64)> = (0..60)
            .map(|i| i as f64 / 59.0)
            .map(|t| (t, (3.0 * t).cos() + rng.random_range(-0.3..0.3)))
            .collect();
        let shifted: Vec<(f64, f64)> = pts.iter().map(|&(t, y)| (t, y + 1000.0)).collect();
        let grid = uniform_grid(0.0, 1.0, 21);
        let a = smooth_curve(&pts, &SmootherConfig::default(), &grid).unwrap();
        let b = smooth_curve(&shifted, &SmootherConfig::default(), &grid).unwrap();
        assert_eq!(a.bandwidth, b.bandwidth);
        for (x, y) in a.curve.values.iter().zip(&b.curve.values) {
            assert!((y - x - 1000.0).abs() < 1e-9);
        }
    }

    fn lattice(n: usize) -> Vec<(f64, f64)> {
        let g = uniform_grid(0.0, 1.0, n);
        g.iter().flat_map(|&s| g.iter().map(move |&t| (s, t))).collect()
    }

    #[test]
    fn surface_constant_and_plane() {
        let grid = uniform_grid(0.0, 1.0, 9);
        let constant: Vec<_> = lattice(15).into_iter().map(|(s, t)| (s, t, -1.5)).collect();
        let fit = smooth_surface(&constant, &SmootherConfig::default(), &grid).unwrap();
        assert!(fit.values.iter().all(|v| (v + 1.5).abs() < 1e-10));

        let plane: Vec<_> = lattice(15).into_iter().map(|(s, t)| (s, t, s + t)).collect();
        let fit = smooth_surface(&plane, &SmootherConfig::default(), &grid).unwrap();
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                assert!((fit.values[(i, j)] - grid[i] - grid[j]).abs() < 1e-8);
            }
        }
        assert_eq!(fit.values, fit.values.transpose());
    }

    #[test]
    fn surface_rank_one_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sd = 0.05;
        let noise = Normal::new(0.0, sd).unwrap();
        let phi = |x: f64| (std::f64::consts::PI * x).sin() * std::f64::consts::SQRT_2;
        let mut pts = Vec::new();
        for _ in 0..5 {
            for (s, t) in lattice(21) {
                pts.push((s, t, phi(s) * phi(t) + noise.sample(&mut rng)));
            }
        }
        let grid = uniform_grid(0.0, 1.0, 11);
        let fit = smooth_surface(&pts, &SmootherConfig::default(), &grid).unwrap();
        let mut max_err: f64 = 0.0;
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                max_err = max_err.max((fit.values[(i, j)] - phi(grid[i]) * phi(grid[j])).abs());
            }
        }
        assert!(max_err < 3.0 * sd, "max err {max_err}");
    }

    #[test]
    fn collinear_surface_design_rejected() {
        let pts: Vec<_> = (0..20).map(|i| i as f64).map(|x| (x, 2.0 * x, 1.0)).collect();
        let err = smooth_surface(&pts, &SmootherConfig::default(), &[0.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("degenerate"));
    }

    #[test]
    fn bandwidth_serde_roundtrip() {
        let cfg: SmootherConfig = toml::from_str("bandwidth = \"auto\"\ngrid_size = 31").unwrap();
        assert_eq!(cfg.bandwidth, Bandwidth::Auto);
        let cfg: SmootherConfig = toml::from_str("bandwidth = 0.4").unwrap();
        assert_eq!(cfg.bandwidth, Bandwidth::Fixed(0.4));
        assert!(toml::from_str::<SmootherConfig>("bandwidth = -1.0").is_err());
    }

    proptest::proptest! {
        #[test]
        fn local_linear_reproduces_lines(
            a in -10f64..10.0, b in -10f64..10.0,
            mut ts in proptest::collection::vec(0f64..1.0, 3..40),
            h in 0.05f64..2.0,
        ) {
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            proptest::prop_assume!(ts.len() >= 3);
            let pts: Vec<_> = ts.iter().map(|&t| (t, a + b * t)).collect();
            let grid = uniform_grid(ts[0], ts[ts.len() - 1], 7);
            let fit = smooth_curve(&pts, &SmootherConfig::with_bandwidth(h), &grid).unwrap();
            for (x, v) in grid.iter().zip(&fit.curve.values) {
                proptest::prop_assert!((v - (a + b * x)).abs() < 1e-7 * (1.0 + a.abs() + b.abs()));
            }
        }
    }
}
