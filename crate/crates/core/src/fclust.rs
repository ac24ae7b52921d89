//! Model-based clustering of FPC scores: Gaussian mixtures fitted by EM with
//! em-EM initialization, hard assignment, and elbow selection of K.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::{fit_pace, FpcaConfig};
use crate::funcdata::{IrregularFunctionalDataset, SmootherConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const EMPTY_MASS: f64 = 1e-10;
const MAX_REINIT: usize = 3;

/// Score features, one row per subject.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Features {
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Features {
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::Cluster("id and row counts differ".into()));
        }
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Cluster("ragged feature rows".into()));
        }
        Ok(Self { ids, rows })
    }

    /// Features with generated ids `0..n`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(ids, rows)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureModel {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub loglik: f64,
    /// Log-likelihood after each E-step of the final run.
    pub loglik_trace: Vec<f64>,
    pub responsibilities: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub reinitializations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmOptions {
    /// Number of short em-EM runs.
    pub restarts: usize,
    pub short_iterations: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            short_iterations: 5,
            max_iterations: 500,
            tolerance: 1e-8,
            seed: crate::DEFAULT_SEED,
        }
    }
}

/// PACE scores (truncated by `fpca_cfg`) standardized per column.
pub fn cluster_features(
    data: &IrregularFunctionalDataset,
    sconf: &SmootherConfig,
    fpca_cfg: &FpcaConfig,
) -> Result<Features> {
    let model = fit_pace(data, sconf, fpca_cfg)?;
    let n = model.scores.len();
    let d = model.k();
    let mut rows = model.scores.clone();
    for j in 0..d {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1).max(1) as f64;
        let sd = var.sqrt();
        for r in rows.iter_mut() {
            r[j] = if sd > 0.0 { (r[j] - mean) / sd } else { 0.0 };
        }
    }
    Features::new(model.subject_ids, rows)
}

struct Component {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl Component {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Cluster("component covariance not positive definite".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(Self { mean, cov, chol, log_det })
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        let z = self.chol.l().solve_lower_triangular(&diff).expect("triangular solve");
        -0.5 * (diff.len() as f64 * LN_2PI + self.log_det + z.norm_squared())
    }
}

fn floored(mut cov: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    cov = (&cov + cov.transpose()) * 0.5;
    let min = SymmetricEigen::new(cov.clone()).eigenvalues.min();
    if min < floor {
        for i in 0..cov.nrows() {
            cov[(i, i)] += floor - min;
        }
    }
    cov
}

struct EmState<'a> {
    x: &'a [DVector<f64>],
    floor: f64,
    overall_cov: DMatrix<f64>,
    weights: Vec<f64>,
    comps: Vec<Component>,
    reinits: usize,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl<'a> EmState<'a> {
    fn new(x: &'a [DVector<f64>], floor: f64, overall_cov: DMatrix<f64>, means: Vec<DVector<f64>>) -> Result<Self> {
        let k = means.len();
        let comps = means
            .into_iter()
            .map(|m| Component::new(m, overall_cov.clone()))
            .collect::<Result<_>>()?;
        Ok(Self { x, floor, overall_cov, weights: vec![1.0 / k as f64; k], comps, reinits: 0 })
    }

    fn log_joint(&self, i: usize) -> Vec<f64> {
        self.comps
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w.ln() + c.log_density(&self.x[i]))
            .collect()
    }

    /// Responsibilities and log-likelihood at the current parameters.
    fn e_step(&self) -> (Vec<Vec<f64>>, f64) {
        let mut ll = 0.0;
        let resp = (0..self.x.len())
            .map(|i| {
                let lj = self.log_joint(i);
                let lse = log_sum_exp(&lj);
                ll += lse;
                lj.iter().map(|v| (v - lse).exp()).collect()
            })
            .collect();
        (resp, ll)
    }

    fn m_step(&mut self, resp: &[Vec<f64>]) -> Result<()> {
        let n = self.x.len();
        let d = self.x[0].len();
        for c in 0..self.comps.len() {
            let mass: f64 = resp.iter().map(|r| r[c]).sum();
            if mass < EMPTY_MASS {
                self.reinitialize(c)?;
                continue;
            }
            let mut mean = DVector::zeros(d);
            for (i, r) in resp.iter().enumerate() {
                mean += r[c] * &self.x[i];
            }
            mean /= mass;
            let mut cov = DMatrix::zeros(d, d);
            for (i, r) in resp.iter().enumerate() {
                let diff = &self.x[i] - &mean;
                cov += r[c] * &diff * diff.transpose();
            }
            cov /= mass;
            self.weights[c] = mass / n as f64;
            self.comps[c] = Component::new(mean, floored(cov, self.floor))?;
        }
        let total: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= total);
        Ok(())
    }

    /// Restarts an emptied component at the worst-fitting observation.
    fn reinitialize(&mut self, c: usize) -> Result<()> {
        self.reinits += 1;
        if self.reinits > MAX_REINIT {
            return Err(Error::Cluster(format!(
                "component {c} emptied more than {MAX_REINIT} times"
            )));
        }
        let worst = (0..self.x.len())
            .map(|i| (i, log_sum_exp(&self.log_joint(i))))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|p| p.0)
            .unwrap_or(0);
        self.comps[c] = Component::new(self.x[worst].clone(), self.overall_cov.clone())?;
        self.weights[c] = 1.0 / self.comps.len() as f64;
        Ok(())
    }

    fn run(&mut self, iterations: usize, tol: f64, trace: &mut Vec<f64>) -> Result<bool> {
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..iterations {
            let (resp, ll) = self.e_step();
            trace.push(ll);
            if (ll - prev).abs() < tol {
                return Ok(true);
            }
            prev = ll;
            self.m_step(&resp)?;
        }
        Ok(false)
    }
}

fn mle_covariance(x: &[DVector<f64>]) -> DMatrix<f64> {
    let n = x.len() as f64;
    let d = x[0].len();
    let mean = x.iter().fold(DVector::zeros(d), |acc, v| acc + v) / n;
    x.iter().fold(DMatrix::zeros(d, d), |acc, v| {
        let diff = v - &mean;
        acc + &diff * diff.transpose()
    }) / n
}

/// Fits a K-component full-covariance Gaussian mixture by em-EM.
pub fn em_fit(features: &Features, k: usize, opts: &EmOptions) -> Result<MixtureModel> {
    let n = features.n();
    let d = features.dim();
    if k == 0 {
        return Err(Error::Cluster("K must be at least 1".into()));
    }
    if d == 0 || n <= k * (d + 1) {
        return Err(Error::Cluster(format!(
            "need n > K(d+1): n={n}, K={k}, d={d}"
        )));
    }
    let x: Vec<DVector<f64>> = features.rows.iter().map(|r| DVector::from_vec(r.clone())).collect();
    let raw = mle_covariance(&x);
    let mean_var = raw.trace() / d as f64;
    let floor = 1e-6 * if mean_var > 0.0 { mean_var } else { 1.0 };
    let overall = floored(raw, floor);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut best: Option<(f64, EmState)> = None;
    let mut last_err = None;
    for _ in 0..opts.restarts.max(1) {
        let means = sample(&mut rng, n, k).into_iter().map(|i| x[i].clone()).collect();
        let mut state = EmState::new(&x, floor, overall.clone(), means)?;
        let mut trace = Vec::new();
        match state.run(opts.short_iterations.max(1), opts.tolerance, &mut trace) {
            Ok(_) => {
                let ll = state.e_step().1;
                if best.as_ref().is_none_or(|b| ll > b.0) {
                    best = Some((ll, state));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (_, mut state) = best.ok_or_else(|| last_err.unwrap_or(Error::Cluster("all short runs failed".into())))?;
    state.reinits = 0;
    let mut trace = Vec::new();
    let converged = state.run(opts.max_iterations, opts.tolerance, &mut trace)?;
    let (resp, loglik) = state.e_step();
    Ok(MixtureModel {
        k,
        weights: state.weights.clone(),
        means: state.comps.iter().map(|c| c.mean.iter().copied().collect()).collect(),
        covariances: state
            .comps
            .iter()
            .map(|c| (0..d).map(|i| (0..d).map(|j| c.cov[(i, j)]).collect()).collect())
            .collect(),
        loglik,
        iterations: trace.len(),
        loglik_trace: trace,
        responsibilities: resp,
        converged,
        reinitializations: state.reinits,
    })
}

/// Hard assignment argmax_c π_c ψ(x | μ_c, Σ_c); ties go to the smaller index.
pub fn assign(model: &MixtureModel, features: &Features) -> Result<ClusterAssignment> {
    let d = model.means.first().map_or(0, Vec::len);
    if features.dim() != d {
        return Err(Error::Cluster(format!(
            "feature dimension {} does not match model dimension {d}",
            features.dim()
        )));
    }
    let comps: Vec<Component> = model
        .means
        .iter()
        .zip(&model.covariances)
        .map(|(m, c)| {
            Component::new(DVector::from_vec(m.clone()), DMatrix::from_fn(d, d, |i, j| c[i][j]))
        })
        .collect::<Result<_>>()?;
    let labels = features
        .rows
        .iter()
        .map(|r| {
            let x = DVector::from_vec(r.clone());
            let mut best = (0, f64::NEG_INFINITY);
            for (c, comp) in comps.iter().enumerate() {
                let v = model.weights[c].ln() + comp.log_density(&x);
                if v > best.1 {
                    best = (c, v);
                }
            }
            best.0
        })
        .collect();
    Ok(ClusterAssignment { ids: features.ids.clone(), labels })
}

/// Within-cluster sum of squares of a hard partition.
pub fn wcss(features: &Features, labels: &[usize]) -> f64 {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let d = features.dim();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in features.rows.iter().zip(labels) {
        counts[l] += 1;
        for j in 0..d {
            sums[l][j] += r[j];
        }
    }
    features
        .rows
        .iter()
        .zip(labels)
        .map(|(r, &l)| {
            (0..d).map(|j| (r[j] - sums[l][j] / counts[l] as f64).powi(2)).sum::<f64>()
        })
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElbowResult {
    pub k_star: usize,
    /// WCSS for K = 1..=k_max.
    pub wcss: Vec<f64>,
    /// Second differences for interior K = 2..k_max−1 (index 0 ↔ K = 2).
    pub second_differences: Vec<f64>,
    /// Set when the largest second difference is below 5% of WCSS(1).
    pub weak_elbow: bool,
    pub assignments: Vec<ClusterAssignment>,
}

/// Chooses K by the largest second difference of WCSS(K).
pub fn select_k_elbow(features: &Features, k_max: usize, opts: &EmOptions) -> Result<ElbowResult> {
    let n = features.n();
    let d = features.dim();
    let feasible = (n.saturating_sub(1)) / (d + 1);
    let k_max = k_max.min(feasible).min(n.saturating_sub(1));
    if k_max < 3 {
        return Err(Error::Cluster(format!("elbow needs at least 3 candidate K, have {k_max}")));
    }
    let fit_labels = |k: usize, seed: u64| -> Result<ClusterAssignment> {
        let model = em_fit(features, k, &EmOptions { seed, ..*opts })?;
        assign(&model, features)
    };
    let mut wcss_values = Vec::with_capacity(k_max);
    let mut assignments = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let seed = opts.seed.wrapping_add(k as u64);
        let mut a = fit_labels(k, seed)?;
        let mut w = wcss(features, &a.labels);
        if let Some(&prev) = wcss_values.last() {
            if w > prev {
                let retry = fit_labels(k, seed.wrapping_add(1_000_003))?;
                let wr = wcss(features, &retry.labels);
                if wr < w {
                    a = retry;
                    w = wr;
                }
            }
        }
        wcss_values.push(w);
        assignments.push(a);
    }
    let second: Vec<f64> = (1..k_max - 1)
        .map(|i| wcss_values[i - 1] - 2.0 * wcss_values[i] + wcss_values[i + 1])
        .collect();
    let mut best = 0;
    for (i, v) in second.iter().enumerate() {
        if *v > second[best] {
            best = i;
        }
    }
    Ok(ElbowResult {
        k_star: best + 2,
        weak_elbow: second[best] < 0.05 * wcss_values[0],
        wcss: wcss_values,
        second_differences: second,
        assignments,
    })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_cells: f64 = table.iter().flatten().map(|&x| c2(x)).sum();
    let sum_a: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(a.len() as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (sum_cells - expected) / (max - expected)
}
