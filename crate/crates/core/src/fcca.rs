//! Functional canonical correlation via a Fourier expansion and a
//! ridge-regularized generalized eigenproblem.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcdata::{quadrature_weights, uniform_grid, GridCurve, IrregularFunctionalDataset};
use crate::linalg::{center_columns, inv_sqrt_spd, sample_covariance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcaConfig {
    /// Odd number of Fourier functions: constant plus sine/cosine pairs.
    pub n_basis: usize,
    /// Ridge added to each coefficient covariance, relative to its mean
    /// diagonal.
    pub ridge: f64,
    pub n_pairs: usize,
    /// Evaluation grid size for the weight functions.
    pub grid_size: usize,
}

impl Default for CcaConfig {
    fn default() -> Self {
        Self { n_basis: 25, ridge: 1e-8, n_pairs: 3, grid_size: 51 }
    }
}

impl CcaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_basis < 3 || self.n_basis.is_multiple_of(2) {
            return Err(Error::Cca(format!("n_basis must be odd and >= 3, got {}", self.n_basis)));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Cca("ridge must be non-negative".into()));
        }
        if self.n_pairs == 0 {
            return Err(Error::Cca("n_pairs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcaResult {
    /// ρ₁ ≥ ρ₂ ≥ … in [0, 1].
    pub correlations: Vec<f64>,
    /// (uₖ, vₖ) evaluated on a common grid.
    pub weight_functions: Vec<(GridCurve, GridCurve)>,
    pub subject_ids: Vec<String>,
    /// n × pairs probe scores (⟨uₖ, Xᵢ − X̄⟩, ⟨vₖ, Yᵢ − Ȳ⟩).
    pub subject_scores: Vec<Vec<(f64, f64)>>,
    pub n_basis: usize,
    /// Absolute ridge added to each side.
    pub ridge_x: f64,
    pub ridge_y: f64,
    pub warnings: Vec<String>,
}

/// Orthonormal Fourier basis on [lo, lo + period] evaluated at `t`.
pub fn fourier_basis(t: f64, lo: f64, period: f64, n_basis: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_basis);
    out.push(1.0 / period.sqrt());
    let amp = (2.0 / period).sqrt();
    let x = 2.0 * std::f64::consts::PI * (t - lo) / period;
    for m in 1..=(n_basis - 1) / 2 {
        let mf = m as f64;
        out.push(amp * (mf * x).sin());
        out.push(amp * (mf * x).cos());
    }
    out
}

/// Least-squares Fourier coefficients of one curve, weighting residuals by
/// the trapezoidal quadrature of its own observation times.
fn project(times: &[f64], values: &[f64], lo: f64, period: f64, n_basis: usize) -> Result<Vec<f64>> {
    let w = quadrature_weights(times)?;
    let n = times.len();
    let b = DMatrix::from_fn(n, n_basis, |i, j| fourier_basis(times[i], lo, period, n_basis)[j]);
    let sw = DVector::from_iterator(n, w.iter().map(|x| x.sqrt()));
    let mut bw = b.clone();
    for i in 0..n {
        bw.row_mut(i).scale_mut(sw[i]);
    }
    let yw = DVector::from_iterator(n, values.iter().zip(sw.iter()).map(|(y, s)| y * s));
    let svd = bw.svd(true, true);
    let coef = svd.solve(&yw, 1e-12).map_err(|e| Error::Cca(format!("projection failed: {e}")))?;
    Ok(coef.iter().copied().collect())
}

fn coefficient_matrix(
    data: &IrregularFunctionalDataset,
    order: &[usize],
    lo: f64,
    period: f64,
    n_basis: usize,
) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let s = &data.subjects()[i];
            project(&s.times, &s.values, lo, period, n_basis)
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(rows.len(), n_basis, |i, j| rows[i][j]))
}

fn with_ridge(cov: &DMatrix<f64>, rel: f64) -> (DMatrix<f64>, f64) {
    let p = cov.nrows();
    let ridge = rel * cov.trace() / p as f64;
    let mut out = cov.clone();
    for i in 0..p {
        out[(i, i)] += ridge;
    }
    (out, ridge)
}

/// Makes the score columns `coef * w_k` mutually uncorrelated with unit
/// sample variance, updating the weight vectors in place (sequential
/// Gram–Schmidt in the sample covariance metric).
fn orthonormalize(coef_centered: &DMatrix<f64>, weights: &mut [DVector<f64>]) {
    let n1 = (coef_centered.nrows() - 1).max(1) as f64;
    let cov = |a: &DVector<f64>, b: &DVector<f64>| (coef_centered * a).dot(&(coef_centered * b)) / n1;
    for k in 0..weights.len() {
        for j in 0..k {
            let c = cov(&weights[k], &weights[j]);
            let wj = weights[j].clone();
            weights[k] -= c * wj;
        }
        let v = cov(&weights[k], &weights[k]);
        if v > 0.0 {
            weights[k] /= v.sqrt();
        }
    }
}

/// Canonical correlation analysis between two functional samples matched by
/// subject id.
pub fn fit_fcca(
    sample_x: &IrregularFunctionalDataset,
    sample_y: &IrregularFunctionalDataset,
    config: &CcaConfig,
) -> Result<CcaResult> {
    config.validate()?;
    let ids = sample_x.ids();
    let mut y_ids = sample_y.ids();
    let mut x_sorted = ids.clone();
    x_sorted.sort();
    y_ids.sort();
    if x_sorted != y_ids {
        return Err(Error::Cca("subject ids of the two samples do not match".into()));
    }
    let y_order: Vec<usize> = ids
        .iter()
        .map(|id| sample_y.subjects().iter().position(|s| &s.id == id).unwrap())
        .collect();
    let x_order: Vec<usize> = (0..ids.len()).collect();
    let n = ids.len();
    let p = config.n_basis;
    let mut warnings = Vec::new();
    if n < p {
        warnings.push(format!("only {n} subjects for {p} basis functions; estimates are ridge-driven"));
    }
    if n < 3 {
        return Err(Error::Cca("need at least 3 subjects".into()));
    }

    let (lo, hi) = {
        let (a, b) = sample_x.domain();
        let (c, d) = sample_y.domain();
        (a.min(c), b.max(d))
    };
    let period = hi - lo;
    let cx = coefficient_matrix(sample_x, &x_order, lo, period, p)?;
    let cy = coefficient_matrix(sample_y, &y_order, lo, period, p)?;
    let (ax, ay) = (center_columns(&cx), center_columns(&cy));
    let n1 = (n - 1) as f64;
    let (sxx, ridge_x) = with_ridge(&sample_covariance(&cx), config.ridge);
    let (syy, ridge_y) = with_ridge(&sample_covariance(&cy), config.ridge);
    let sxy = ax.transpose() * &ay / n1;
    let singular = || {
        Error::Cca(
            "coefficient covariance singular after ridge; increase ridge or reduce n_basis".into(),
        )
    };
    let rx = inv_sqrt_spd(&sxx).ok_or_else(singular)?;
    let ry = inv_sqrt_spd(&syy).ok_or_else(singular)?;
    let m = &rx * &sxy * &ry;
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let pairs = config.n_pairs.min(p).min(n - 1);
    let order = &order[..pairs];

    let correlations: Vec<f64> =
        order.iter().map(|&k| svd.singular_values[k].clamp(0.0, 1.0)).collect();
    let mut wx: Vec<DVector<f64>> = order.iter().map(|&k| &rx * u.column(k)).collect();
    let mut wy: Vec<DVector<f64>> = order.iter().map(|&k| &ry * vt.row(k).transpose()).collect();
    orthonormalize(&ax, &mut wx);
    orthonormalize(&ay, &mut wy);
    for k in 0..pairs {
        // ⟨uₖ, 1⟩ is carried by the constant basis function alone.
        if wx[k][0] < 0.0 {
            wx[k] = -wx[k].clone();
            wy[k] = -wy[k].clone();
        }
    }

    let grid = uniform_grid(lo, hi, config.grid_size.max(2));
    let basis_on_grid: Vec<Vec<f64>> = grid.iter().map(|&t| fourier_basis(t, lo, period, p)).collect();
    let to_curve = |w: &DVector<f64>| -> Result<GridCurve> {
        let vals = basis_on_grid.iter().map(|b| b.iter().zip(w.iter()).map(|(x, y)| x * y).sum()).collect();
        GridCurve::new(grid.clone(), vals)
    };
    let weight_functions = (0..pairs)
        .map(|k| Ok((to_curve(&wx[k])?, to_curve(&wy[k])?)))
        .collect::<Result<Vec<_>>>()?;
    let sx: Vec<DVector<f64>> = wx.iter().map(|w| &ax * w).collect();
    let sy: Vec<DVector<f64>> = wy.iter().map(|w| &ay * w).collect();
    let subject_scores =
        (0..n).map(|i| (0..pairs).map(|k| (sx[k][i], sy[k][i])).collect()).collect();

    Ok(CcaResult {
        correlations,
        weight_functions,
        subject_ids: ids,
        subject_scores,
        n_basis: p,
        ridge_x,
        ridge_y,
        warnings,
    })
}

/// Probe-score pairs of canonical pair `k` (1-based), keyed by subject id.
pub fn canonical_scores(result: &CcaResult, k: usize) -> Result<Vec<(String, f64, f64)>> {
    if k == 0 || k > result.correlations.len() {
        return Err(Error::Cca(format!(
            "pair {k} out of range 1..={}",
            result.correlations.len()
        )));
    }
    Ok(result
        .subject_ids
        .iter()
        .zip(&result.subject_scores)
        .map(|(id, s)| (id.clone(), s[k - 1].0, s[k - 1].1))
        .collect())
}
