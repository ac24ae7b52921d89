//! Functional principal components through conditional expectation (PACE).
//!
//! Fitting pools all observations to smooth the mean, smooths the
//! off-diagonal raw covariances into a surface, estimates the measurement
//! error variance from the diagonal, solves the quadrature-weighted
//! eigenproblem and predicts scores by best linear unbiased prediction, which
//! stays well defined for sparse subjects.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcdata::{
    interpolate, quadrature_weights, smooth_surface, uniform_grid, GridCurve,
    IrregularFunctionalDataset, LocalLinear1d, SmootherConfig,
};
use crate::linalg::{cholesky_with_jitter, weighted_eigen};

/// Relative cutoff below which an eigenvalue counts as zero.
const EIGEN_ZERO: f64 = 1e-12;
/// Largest pooled-design gap tolerated, as a fraction of the domain span.
const MAX_COVERAGE_GAP: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Fve,
    Aic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpcaConfig {
    pub fve_threshold: f64,
    pub max_k: usize,
    pub selection: Selection,
}

impl Default for FpcaConfig {
    fn default() -> Self {
        Self { fve_threshold: 0.9999, max_k: 20, selection: Selection::Fve }
    }
}

impl FpcaConfig {
    pub fn with_fve(threshold: f64) -> Self {
        Self { fve_threshold: threshold, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fve_threshold > 0.0 && self.fve_threshold <= 1.0) {
            return Err(Error::Fpca(format!(
                "fve_threshold must lie in (0, 1], got {}",
                self.fve_threshold
            )));
        }
        if self.max_k == 0 {
            return Err(Error::Fpca("max_k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub mean: f64,
    pub covariance: f64,
    pub variance: f64,
}

/// A fitted PACE model on a common grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FpcaModel {
    pub grid: Vec<f64>,
    pub weights: Vec<f64>,
    pub mean: GridCurve,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<GridCurve>,
    /// Every positive eigenvalue of the smoothed covariance operator.
    pub all_eigenvalues: Vec<f64>,
    pub sigma2: f64,
    pub subject_ids: Vec<String>,
    /// n × K conditional-expectation scores.
    pub scores: Vec<Vec<f64>>,
    /// Cumulative fraction of variance explained for k = 1..=K.
    pub fve: Vec<f64>,
    /// Smoothed covariance surface on `grid × grid`.
    pub covariance: Vec<Vec<f64>>,
    /// Smoothed diagonal of the raw covariances (signal plus noise).
    pub raw_variance: Vec<f64>,
    pub bandwidths: Bandwidths,
    /// The truncation remainder of the expansion is absorbed into `sigma2`.
    pub truncation_residual_note: bool,
    /// True when the sample carries no variation around its mean.
    pub degenerate: bool,
}

impl FpcaModel {
    /// Assembles a model from known components; scores are left empty.
    pub fn from_parts(
        grid: Vec<f64>,
        mean: Vec<f64>,
        eigenvalues: Vec<f64>,
        eigenfunctions: Vec<Vec<f64>>,
        sigma2: f64,
    ) -> Result<Self> {
        if eigenvalues.len() != eigenfunctions.len() {
            return Err(Error::Fpca("eigenvalue/eigenfunction count mismatch".into()));
        }
        let weights = quadrature_weights(&grid)?;
        let g = grid.len();
        let mut covariance = vec![vec![0.0; g]; g];
        for (l, f) in eigenvalues.iter().zip(&eigenfunctions) {
            for i in 0..g {
                for j in 0..g {
                    covariance[i][j] += l * f[i] * f[j];
                }
            }
        }
        let total: f64 = eigenvalues.iter().filter(|&&l| l > 0.0).sum();
        let fve = cumulative_fve(&eigenvalues, total);
        Ok(Self {
            mean: GridCurve::new(grid.clone(), mean)?,
            eigenfunctions: eigenfunctions
                .into_iter()
                .map(|f| GridCurve::new(grid.clone(), f))
                .collect::<Result<_>>()?,
            raw_variance: (0..g).map(|i| covariance[i][i] + sigma2).collect(),
            all_eigenvalues: eigenvalues.clone(),
            eigenvalues,
            weights,
            grid,
            sigma2,
            subject_ids: Vec::new(),
            scores: Vec::new(),
            fve,
            covariance,
            bandwidths: Bandwidths { mean: f64::NAN, covariance: f64::NAN, variance: f64::NAN },
            truncation_residual_note: true,
            degenerate: false,
        })
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Variance function, the diagonal of the fitted covariance surface.
    pub fn variance_curve(&self) -> GridCurve {
        let values = (0..self.grid.len()).map(|i| self.covariance[i][i]).collect();
        GridCurve { grid: self.grid.clone(), values }
    }

    /// Correlation surface C(s,t)/sqrt(C(s,s)C(t,t)); zero where a variance
    /// vanishes.
    pub fn correlation_surface(&self) -> Vec<Vec<f64>> {
        let g = self.grid.len();
        let sd: Vec<f64> = (0..g).map(|i| self.covariance[i][i].max(0.0).sqrt()).collect();
        (0..g)
            .map(|i| {
                (0..g)
                    .map(|j| {
                        let d = sd[i] * sd[j];
                        if d > 0.0 {
                            (self.covariance[i][j] / d).clamp(-1.0, 1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// μ + Σ ξₖ φₖ on the model grid, using the first `k` components.
    pub fn reconstruct(&self, scores: &[f64], k: usize) -> Vec<f64> {
        let mut out = self.mean.values.clone();
        for (xi, phi) in scores.iter().zip(&self.eigenfunctions).take(k) {
            for (o, p) in out.iter_mut().zip(&phi.values) {
                *o += xi * p;
            }
        }
        out
    }
}

fn cumulative_fve(eigenvalues: &[f64], total: f64) -> Vec<f64> {
    let mut acc = 0.0;
    eigenvalues
        .iter()
        .map(|l| {
            acc += l.max(0.0);
            if total > 0.0 {
                (acc / total).min(1.0)
            } else {
                1.0
            }
        })
        .collect()
}

/// Smallest K whose cumulative FVE reaches `threshold`, capped by `max_k`.
pub fn select_k_fve(eigenvalues: &[f64], threshold: f64, max_k: usize) -> usize {
    let positive: Vec<f64> = eigenvalues.iter().copied().filter(|&l| l > 0.0).collect();
    let total: f64 = positive.iter().sum();
    if positive.is_empty() || total <= 0.0 {
        return 1;
    }
    let fve = cumulative_fve(&positive, total);
    let k = fve
        .iter()
        .position(|&f| f >= threshold * (1.0 - 1e-12))
        .map(|i| i + 1)
        .unwrap_or(positive.len());
    k.min(max_k).max(1)
}

/// Index (1-based) of the smallest AIC value; ties favour fewer components.
pub fn select_k_aic(aic: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in aic.iter().enumerate() {
        if *v < aic[best] {
            best = i;
        }
    }
    best + 1
}

fn check_coverage(data: &IrregularFunctionalDataset) -> Result<()> {
    let (lo, hi) = data.domain();
    let mut times: Vec<f64> = data.subjects().iter().flat_map(|s| s.times.clone()).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut gaps = vec![times[0] - lo, hi - times[times.len() - 1]];
    gaps.extend(times.windows(2).map(|w| w[1] - w[0]));
    let worst = gaps.into_iter().fold(0.0, f64::max);
    if worst > MAX_COVERAGE_GAP * (hi - lo) {
        return Err(Error::Fpca(format!(
            "pooled design leaves a gap of {worst} (> 20% of the domain span)"
        )));
    }
    Ok(())
}

/// Fits the PACE model.
pub fn fit_pace(
    data: &IrregularFunctionalDataset,
    sconf: &SmootherConfig,
    fconf: &FpcaConfig,
) -> Result<FpcaModel> {
    fconf.validate()?;
    sconf.validate()?;
    if data.len() < 3 {
        return Err(Error::Fpca(format!("need at least 3 subjects, got {}", data.len())));
    }
    check_coverage(data)?;
    let (lo, hi) = data.domain();
    let span = hi - lo;
    let grid = uniform_grid(lo, hi, sconf.grid_size);
    let weights = quadrature_weights(&grid)?;

    let mean_fit = LocalLinear1d::fit(&data.pooled(), sconf, &grid)?;
    let mean = mean_fit.eval_many(&grid);
    let residuals: Vec<Vec<f64>> = data
        .subjects()
        .iter()
        .map(|s| s.times.iter().zip(&s.values).map(|(&t, &y)| y - mean_fit.eval(t)).collect())
        .collect();

    let band = span / sconf.grid_size as f64;
    let mut off_diag = Vec::new();
    let mut diag = Vec::new();
    for (s, r) in data.subjects().iter().zip(&residuals) {
        for j in 0..s.times.len() {
            diag.push((s.times[j], r[j] * r[j]));
            for l in 0..s.times.len() {
                if (s.times[j] - s.times[l]).abs() >= band {
                    off_diag.push((s.times[j], s.times[l], r[j] * r[l]));
                }
            }
        }
    }
    let surface = smooth_surface(&off_diag, sconf, &grid)?;
    let var_fit = LocalLinear1d::fit(&diag, sconf, &grid)?;
    let raw_variance = var_fit.eval_many(&grid);

    let g = grid.len();
    let (q_lo, q_hi) = (g / 4, (3 * g).div_ceil(4).min(g));
    let sigma2 = (q_lo..q_hi)
        .map(|i| (raw_variance[i] - surface.values[(i, i)]).max(0.0))
        .sum::<f64>()
        / (q_hi - q_lo) as f64;

    let (vals, funcs) = weighted_eigen(&surface.values, &weights);
    let lambda_max = vals.first().copied().unwrap_or(0.0);
    let scale = data
        .subjects()
        .iter()
        .flat_map(|s| s.values.iter().map(|v| v * v))
        .sum::<f64>()
        / data.pooled().len() as f64;
    let degenerate = lambda_max <= 1e-14 * span * (scale + f64::MIN_POSITIVE);
    let covariance: Vec<Vec<f64>> =
        (0..g).map(|i| (0..g).map(|j| surface.values[(i, j)]).collect()).collect();
    let bandwidths = Bandwidths {
        mean: mean_fit.bandwidth(),
        covariance: surface.bandwidth,
        variance: var_fit.bandwidth(),
    };

    let mut model = FpcaModel {
        grid: grid.clone(),
        weights: weights.clone(),
        mean: GridCurve::new(grid.clone(), mean)?,
        eigenvalues: Vec::new(),
        eigenfunctions: Vec::new(),
        all_eigenvalues: Vec::new(),
        sigma2,
        subject_ids: data.ids(),
        scores: Vec::new(),
        fve: Vec::new(),
        covariance,
        raw_variance,
        bandwidths,
        truncation_residual_note: true,
        degenerate,
    };

    if degenerate {
        let flat = vec![1.0 / span.sqrt(); g];
        model.eigenvalues = vec![0.0];
        model.all_eigenvalues = vec![0.0];
        model.eigenfunctions = vec![GridCurve::new(grid, flat)?];
        model.fve = vec![1.0];
        model.scores = vec![vec![0.0]; data.len()];
        return Ok(model);
    }

    let positive: Vec<usize> =
        (0..vals.len()).filter(|&i| vals[i] > EIGEN_ZERO * lambda_max).collect();
    if positive.is_empty() {
        return Err(Error::Fpca("covariance surface has no positive eigenvalues".into()));
    }
    model.all_eigenvalues = positive.iter().map(|&i| vals[i]).collect();
    let max_k = fconf.max_k.min(positive.len());
    let k = match fconf.selection {
        crate::fpca::Selection::Fve => {
            select_k_fve(&model.all_eigenvalues, fconf.fve_threshold, max_k)
        }
        crate::fpca::Selection::Aic => {
            let aic: Vec<f64> = (1..=max_k)
                .map(|k| {
                    let mut trial = model.clone();
                    set_components(&mut trial, &positive[..k], &vals, &funcs)?;
                    pseudo_aic(&trial, data)
                })
                .collect::<Result<_>>()?;
            select_k_aic(&aic)
        }
    };
    set_components(&mut model, &positive[..k], &vals, &funcs)?;
    model.scores = data
        .subjects()
        .iter()
        .map(|s| pace_scores(&model, &s.times, &s.values))
        .collect::<Result<_>>()?;
    Ok(model)
}

fn set_components(
    model: &mut FpcaModel,
    idx: &[usize],
    vals: &[f64],
    funcs: &[Vec<f64>],
) -> Result<()> {
    let total: f64 = model.all_eigenvalues.iter().sum();
    model.eigenvalues = idx.iter().map(|&i| vals[i]).collect();
    model.eigenfunctions = idx
        .iter()
        .map(|&i| GridCurve::new(model.grid.clone(), funcs[i].clone()))
        .collect::<Result<_>>()?;
    model.fve = cumulative_fve(&model.eigenvalues, total);
    Ok(())
}

/// Marginal covariance of a subject observed at `times`: Φ Λ Φᵀ + σ² I.
fn subject_covariance(model: &FpcaModel, times: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = times.len();
    let k = model.k();
    let phi = DMatrix::from_fn(n, k, |i, j| model.eigenfunctions[j].eval(times[i]));
    let lambda = DMatrix::from_diagonal(&DVector::from_vec(model.eigenvalues.clone()));
    let mut sigma = &phi * &lambda * phi.transpose();
    for i in 0..n {
        sigma[(i, i)] += model.sigma2;
    }
    (sigma, phi)
}

/// Conditional-expectation scores ξ̂ = Λ Φᵀ Σ_Y⁻¹ (Y − μ) for one subject.
pub fn pace_scores(model: &FpcaModel, times: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::Fpca("subject times and values must be non-empty and aligned".into()));
    }
    let (lo, hi) = (model.grid[0], model.grid[model.grid.len() - 1]);
    let tol = 1e-9 * (hi - lo);
    if times.iter().any(|&t| t < lo - tol || t > hi + tol) {
        return Err(Error::Fpca("subject time outside the model domain".into()));
    }
    if model.eigenvalues.iter().all(|&l| l == 0.0) {
        return Ok(vec![0.0; model.k()]);
    }
    let resid = DVector::from_iterator(
        times.len(),
        times.iter().zip(values).map(|(&t, &y)| y - interpolate(&model.grid, &model.mean.values, t)),
    );
    let (sigma, phi) = subject_covariance(model, times);
    let (chol, _) = cholesky_with_jitter(&sigma, 1e-8, 1e-2).ok_or_else(|| {
        Error::Fpca("subject covariance not invertible after maximal jitter".into())
    })?;
    let solved = chol.solve(&resid);
    let proj = phi.transpose() * solved;
    Ok(model.eigenvalues.iter().zip(proj.iter()).map(|(l, p)| l * p).collect())
}

/// Gaussian pseudo-likelihood AIC of the truncated model.
fn pseudo_aic(model: &FpcaModel, data: &IrregularFunctionalDataset) -> Result<f64> {
    let mut neg2ll = 0.0;
    for s in data.subjects() {
        let (sigma, _) = subject_covariance(model, &s.times);
        let (chol, _) = cholesky_with_jitter(&sigma, 1e-8, 1e-2)
            .ok_or_else(|| Error::Fpca("AIC: covariance not invertible".into()))?;
        let r = DVector::from_iterator(
            s.times.len(),
            s.times.iter().zip(&s.values).map(|(&t, &y)| y - model.mean.eval(t)),
        );
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        neg2ll += logdet
            + r.dot(&chol.solve(&r))
            + s.times.len() as f64 * (2.0 * std::f64::consts::PI).ln();
    }
    Ok(neg2ll + 2.0 * model.k() as f64)
}

/// μ ± c·√λₖ·φₖ for the 1-based component `k`.
pub fn modes_of_variation(model: &FpcaModel, k: usize, c: f64) -> Result<(GridCurve, GridCurve)> {
    if k == 0 || k > model.k() {
        return Err(Error::Fpca(format!("component {k} out of range 1..={}", model.k())));
    }
    let amp = c * model.eigenvalues[k - 1].max(0.0).sqrt();
    let phi = &model.eigenfunctions[k - 1].values;
    let mu = &model.mean.values;
    let plus = mu.iter().zip(phi).map(|(m, p)| m + amp * p).collect();
    let minus = mu.iter().zip(phi).map(|(m, p)| m - amp * p).collect();
    Ok((GridCurve::new(model.grid.clone(), plus)?, GridCurve::new(model.grid.clone(), minus)?))
}
