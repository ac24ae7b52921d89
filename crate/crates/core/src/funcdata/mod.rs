//! Functional-data containers, quadrature and local-linear smoothers.

mod smoother;

pub use smoother::{
    smooth_curve, smooth_surface, Bandwidth, CurveSmooth, Kernel, LocalLinear1d, SmootherConfig,
    SurfaceSmooth,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject's sparse or dense trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Subject {
    pub fn new(id: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Self {
        Self { id: id.into(), times, values }
    }
}

/// Irregularly observed functional sample on a compact domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrregularFunctionalDataset {
    subjects: Vec<Subject>,
    domain: (f64, f64),
}

impl IrregularFunctionalDataset {
    /// Validates ordering, domain membership and the two-observation minimum.
    pub fn new(subjects: Vec<Subject>, domain: (f64, f64)) -> Result<Self> {
        let (lo, hi) = domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Data(format!("invalid domain [{lo}, {hi}]")));
        }
        for s in &subjects {
            if s.times.len() != s.values.len() {
                return Err(Error::Data(format!(
                    "subject {}: {} times but {} values",
                    s.id,
                    s.times.len(),
                    s.values.len()
                )));
            }
            if s.times.len() < 2 {
                return Err(Error::Data(format!("subject {} has fewer than 2 observations", s.id)));
            }
            if s.times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Data(format!("subject {}: times not strictly increasing", s.id)));
            }
            if s.times.iter().any(|&t| t < lo || t > hi) {
                return Err(Error::Data(format!("subject {}: time outside domain", s.id)));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("subject {}: non-finite value", s.id)));
            }
        }
        Ok(Self { subjects, domain })
    }

    /// Builds a dataset whose domain is the hull of all observation times.
    pub fn from_subjects(subjects: Vec<Subject>) -> Result<Self> {
        let lo = subjects
            .iter()
            .flat_map(|s| s.times.first().copied())
            .fold(f64::INFINITY, f64::min);
        let hi = subjects
            .iter()
            .flat_map(|s| s.times.last().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        Self::new(subjects, (lo, hi))
    }

    /// Dense sample where every subject is observed on the same grid.
    pub fn from_dense(ids: &[String], grid: &[f64], rows: &[Vec<f64>]) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::Data("id count does not match row count".into()));
        }
        let subjects = ids
            .iter()
            .zip(rows)
            .map(|(id, r)| Subject::new(id.clone(), grid.to_vec(), r.clone()))
            .collect();
        Self::from_subjects(subjects)
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.id.clone()).collect()
    }

    /// All (time, value) pairs pooled across subjects.
    pub fn pooled(&self) -> Vec<(f64, f64)> {
        self.subjects
            .iter()
            .flat_map(|s| s.times.iter().copied().zip(s.values.iter().copied()))
            .collect()
    }
}

/// A function discretized on an ordered grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::Data(format!(
                "grid has {} points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("grid not strictly increasing".into()));
        }
        Ok(Self { grid, values })
    }

    /// Linear interpolation, constant beyond the ends.
    pub fn eval(&self, x: f64) -> f64 {
        interpolate(&self.grid, &self.values, x)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid,value\n");
        for (g, v) in self.grid.iter().zip(&self.values) {
            out.push_str(&format!("{g},{v}\n"));
        }
        out
    }
}

/// `n` equispaced points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect()
        }
    }
}

/// Trapezoidal quadrature weights; they sum to the grid span.
pub fn quadrature_weights(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.len() < 2 {
        return Err(Error::Data("quadrature needs at least 2 grid points".into()));
    }
    let n = grid.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let half = 0.5 * (grid[i + 1] - grid[i]);
        w[i] += half;
        w[i + 1] += half;
    }
    Ok(w)
}

/// Discretized L2 inner product under the given quadrature weights.
pub fn inner_product(weights: &[f64], f: &[f64], g: &[f64]) -> f64 {
    weights.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
}

/// Piecewise-linear interpolation on an increasing grid.
pub fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if n == 0 {
        return f64::NAN;
    }
    if x <= grid[0] {
        return values[0];
    }
    if x >= grid[n - 1] {
        return values[n - 1];
    }
    let i = grid.partition_point(|&g| g <= x) - 1;
    let (x0, x1) = (grid[i], grid[i + 1]);
    let frac = (x - x0) / (x1 - x0);
    values[i] + frac * (values[i + 1] - values[i])
}
