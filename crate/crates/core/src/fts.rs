//! Functional time series built from a cumulative count series: overlapping
//! segmentation, growth-rate curves, long-run covariance with a flat-top
//! lag window, and dynamic FPCA.

use chrono::{Days, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::{select_k_fve, Bandwidths, FpcaConfig, FpcaModel};
use crate::funcdata::{
    inner_product, quadrature_weights, Bandwidth, GridCurve, LocalLinear1d, SmootherConfig,
};
use crate::linalg::weighted_eigen;

const GCV_CANDIDATES: usize = 30;

/// What the values of a [`RegularFts`] represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Counts,
    GrowthRates,
}

/// Equal-length curves on a shared grid. Grid values are day offsets from
/// the first day of the curve's segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularFts {
    pub grid: Vec<f64>,
    pub curves: Vec<Vec<f64>>,
    pub kind: CurveKind,
    pub segment_length: usize,
    pub stride: usize,
    /// First day of the first segment.
    pub origin_date: NaiveDate,
    pub last_observed_count: f64,
    /// Days dropped from the front of the input so segments end on its last day.
    pub trimmed_head: usize,
}

impl RegularFts {
    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    /// Calendar date of grid point `g` of curve `n`.
    pub fn date(&self, n: usize, g: usize) -> NaiveDate {
        let offset = (n * self.stride) as u64 + self.grid[g].round() as u64;
        self.origin_date + Days::new(offset)
    }

    /// The first `m` curves.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m < 1 || m > self.len() {
            return Err(Error::Fts(format!("prefix of {m} curves out of range 1..={}", self.len())));
        }
        let mut out = self.clone();
        out.curves.truncate(m);
        Ok(out)
    }

    /// Rainbow-plot rows `curve_index,grid_point,value`.
    pub fn to_rainbow_csv(&self) -> String {
        let mut s = String::from("curve_index,grid_point,value\n");
        for (n, c) in self.curves.iter().enumerate() {
            for (g, v) in self.grid.iter().zip(c) {
                s.push_str(&format!("{},{},{}\n", n + 1, g, v));
            }
        }
        s
    }
}

/// Cuts a daily cumulative series into overlapping segments of
/// `segment_length` days advancing by `stride`, anchored to the last day.
pub fn segment(
    dates: &[NaiveDate],
    counts: &[f64],
    segment_length: usize,
    stride: usize,
) -> Result<RegularFts> {
    if dates.len() != counts.len() {
        return Err(Error::Fts("dates and counts differ in length".into()));
    }
    if segment_length < 2 || stride == 0 || stride >= segment_length {
        return Err(Error::Fts(format!(
            "need 0 < stride < segment_length, got stride {stride}, length {segment_length}"
        )));
    }
    let len = counts.len();
    if len < segment_length {
        return Err(Error::Fts(format!(
            "series of {len} days is shorter than one segment ({segment_length})"
        )));
    }
    let n = (len - segment_length) / stride + 1;
    let used = (n - 1) * stride + segment_length;
    let head = len - used;
    for i in head..len {
        if !(counts[i] > 0.0) {
            return Err(Error::Fts(format!("non-positive count {} on {}", counts[i], dates[i])));
        }
    }
    let curves = (0..n)
        .map(|k| counts[head + k * stride..head + k * stride + segment_length].to_vec())
        .collect();
    Ok(RegularFts {
        grid: (0..segment_length).map(|g| g as f64).collect(),
        curves,
        kind: CurveKind::Counts,
        segment_length,
        stride,
        origin_date: dates[head],
        last_observed_count: counts[len - 1],
        trimmed_head: head,
    })
}

/// Daily growth rates `100·(ln C_j − ln C_{j−1})` within each segment.
pub fn growth_rates(fts: &RegularFts) -> Result<RegularFts> {
    if fts.kind != CurveKind::Counts {
        return Err(Error::Fts("growth rates need count curves".into()));
    }
    let curves = fts
        .curves
        .iter()
        .enumerate()
        .map(|(n, c)| {
            if let Some(g) = c.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::Fts(format!(
                    "non-positive count {} on {}",
                    c[g],
                    fts.date(n, g)
                )));
            }
            Ok(c.windows(2).map(|w| 100.0 * (w[1].ln() - w[0].ln())).collect())
        })
        .collect::<Result<_>>()?;
    Ok(RegularFts {
        grid: fts.grid[1..].to_vec(),
        curves,
        kind: CurveKind::GrowthRates,
        ..fts.clone()
    })
}

/// Smooths every curve with one local-linear bandwidth, chosen by
/// minimizing the GCV criterion summed over curves (or fixed by `sconf`).
pub fn smooth_fts(fts: &RegularFts, sconf: &SmootherConfig) -> Result<RegularFts> {
    sconf.validate()?;
    if fts.grid_len() < 5 {
        return Err(Error::Fts("smoothing needs at least 5 grid points per curve".into()));
    }
    let points: Vec<Vec<(f64, f64)>> = fts
        .curves
        .iter()
        .map(|c| fts.grid.iter().copied().zip(c.iter().copied()).collect())
        .collect();
    let probe = SmootherConfig { bandwidth: Bandwidth::Fixed(f64::MIN_POSITIVE), ..*sconf };
    let fits: Vec<LocalLinear1d> = points
        .iter()
        .map(|p| LocalLinear1d::fit(p, &probe, &fts.grid))
        .collect::<Result<_>>()?;
    let h_min = fits.iter().map(LocalLinear1d::bandwidth).fold(0.0, f64::max);
    let h = match sconf.bandwidth {
        Bandwidth::Fixed(h) => h.max(h_min),
        Bandwidth::Auto => {
            let span = fts.grid[fts.grid_len() - 1] - fts.grid[0];
            let h_max = span.max(2.0 * h_min);
            let ratio = (h_max / h_min).powf(1.0 / (GCV_CANDIDATES - 1) as f64);
            let mut best = (f64::INFINITY, h_max);
            let mut h = h_min;
            for _ in 0..GCV_CANDIDATES {
                let score: f64 = fits.iter().map(|f| f.gcv_score(h)).sum();
                if score < best.0 {
                    best = (score, h);
                }
                h *= ratio;
            }
            best.1
        }
    };
    let fixed = SmootherConfig { bandwidth: Bandwidth::Fixed(h), ..*sconf };
    let curves = points
        .iter()
        .map(|p| Ok(LocalLinear1d::fit(p, &fixed, &fts.grid)?.eval_many(&fts.grid)))
        .collect::<Result<_>>()?;
    Ok(RegularFts { curves, ..fts.clone() })
}

/// Flat-top lag-window weight: 1 on `|x| < k`, linear down to 0 at `|x| = 1`.
pub fn flat_top_kernel(x: f64, k: f64) -> Result<f64> {
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::Fts(format!("flat-top parameter must lie in (0,1), got {k}")));
    }
    Ok(flat_top(x, k))
}

fn flat_top(x: f64, k: f64) -> f64 {
    let a = x.abs();
    if a < k {
        1.0
    } else if a < 1.0 {
        (a - 1.0) / (k - 1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrcConfig {
    /// Flat-top region parameter in (0,1).
    pub kernel_flat: f64,
    pub bandwidth: Bandwidth,
    /// Pilot bandwidth is `N^pilot_exponent`.
    pub pilot_exponent: f64,
    /// Final bandwidth is `c·N^rate_exponent`.
    pub rate_exponent: f64,
    /// Bias constant of the kernel in the plug-in ratio.
    pub bias_constant: f64,
}

impl Default for LrcConfig {
    fn default() -> Self {
        Self {
            kernel_flat: 0.5,
            bandwidth: Bandwidth::Auto,
            pilot_exponent: 0.2,
            rate_exponent: 1.0 / 3.0,
            bias_constant: 1.0,
        }
    }
}

impl LrcConfig {
    pub fn with_bandwidth(h: f64) -> Self {
        Self { bandwidth: Bandwidth::Fixed(h), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        flat_top_kernel(0.0, self.kernel_flat)?;
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0) {
                return Err(Error::Fts(format!("lag-window bandwidth must be positive, got {h}")));
            }
        }
        if !(self.pilot_exponent > 0.0 && self.rate_exponent > 0.0 && self.bias_constant > 0.0) {
            return Err(Error::Fts("plug-in constants must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LongRunCovariance {
    /// Pointwise mean removed before estimation.
    pub mean: Vec<f64>,
    /// Lag window bandwidth actually used.
    pub bandwidth: f64,
    /// Symmetrized estimate on the grid.
    pub matrix: DMatrix<f64>,
    /// Autocovariance surfaces for lags 0..N−1.
    pub autocovariances: Vec<DMatrix<f64>>,
}

/// Lag-i autocovariance of centred curves, `(1/(N−i)) Σ_r Y_r(s) Y_{r+i}(t)`.
fn autocovariance(centred: &[Vec<f64>], lag: usize) -> DMatrix<f64> {
    let n = centred.len();
    let g = centred[0].len();
    let mut out = DMatrix::zeros(g, g);
    for r in 0..n - lag {
        let (a, b) = (&centred[r], &centred[r + lag]);
        for s in 0..g {
            for t in 0..g {
                out[(s, t)] += a[s] * b[t];
            }
        }
    }
    out / (n - lag) as f64
}

/// Autocovariance at any signed lag; negative lags are transposes.
pub fn autocovariance_at(stack: &[DMatrix<f64>], lag: isize) -> DMatrix<f64> {
    let m = &stack[lag.unsigned_abs()];
    if lag < 0 {
        m.transpose()
    } else {
        m.clone()
    }
}

fn weighted_sum(stack: &[DMatrix<f64>], h: f64, k: f64, moment: bool) -> DMatrix<f64> {
    let n = stack.len();
    let limit = n.min(h.ceil().max(0.0) as usize);
    let mut out = if moment { DMatrix::zeros(stack[0].nrows(), stack[0].ncols()) } else { stack[0].clone() };
    for (i, g) in stack.iter().enumerate().take(limit).skip(1) {
        let w = flat_top(i as f64 / h, k) * if moment { i as f64 } else { 1.0 };
        if w != 0.0 {
            out += w * (g + g.transpose());
        }
    }
    out
}

/// Plug-in bandwidth from pilot estimates of the zeroth and first spectral
/// moments, clamped to `[1, N−1]`. The first-moment norm is corrected by its
/// expectation under serial independence, so pure noise yields `h = 1`.
fn plug_in_bandwidth(stack: &[DMatrix<f64>], config: &LrcConfig) -> f64 {
    let n = stack.len();
    let nf = n as f64;
    let k = config.kernel_flat;
    let pilot = nf.powf(config.pilot_exponent);
    let c0 = weighted_sum(stack, pilot, k, false);
    let c1 = weighted_sum(stack, pilot, k, true);
    let g0 = &stack[0];
    let noise_scale = 2.0 * (g0.norm_squared() + g0.trace().powi(2));
    let limit = n.min(pilot.ceil() as usize);
    let noise: f64 = (1..limit)
        .map(|i| (i as f64 * flat_top(i as f64 / pilot, k)).powi(2) * noise_scale / (n - i) as f64)
        .sum();
    let signal = (c1.norm_squared() - noise).max(0.0);
    let kernel_sq = 2.0 * (k + (1.0 - k) / 3.0);
    let denom = (c0.norm_squared() + c0.trace().powi(2)) * kernel_sq;
    let h = if denom > 0.0 {
        let c = (2.0 * config.bias_constant.powi(2) * signal / denom).cbrt();
        c * nf.powf(config.rate_exponent)
    } else {
        1.0
    };
    h.clamp(1.0, (nf - 1.0).max(1.0))
}

/// Lag-window estimate of the long-run covariance of the curves.
pub fn long_run_cov(fts: &RegularFts, config: &LrcConfig) -> Result<LongRunCovariance> {
    config.validate()?;
    let n = fts.len();
    if n < 3 {
        return Err(Error::Fts(format!("long-run covariance needs at least 3 curves, got {n}")));
    }
    let g = fts.grid_len();
    let mean: Vec<f64> =
        (0..g).map(|j| fts.curves.iter().map(|c| c[j]).sum::<f64>() / n as f64).collect();
    let centred: Vec<Vec<f64>> =
        fts.curves.iter().map(|c| c.iter().zip(&mean).map(|(y, m)| y - m).collect()).collect();
    let stack: Vec<DMatrix<f64>> = (0..n).map(|lag| autocovariance(&centred, lag)).collect();
    let h = match config.bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Auto => plug_in_bandwidth(&stack, config),
    };
    let raw = weighted_sum(&stack, h, config.kernel_flat, false);
    let matrix = (&raw + raw.transpose()) * 0.5;
    Ok(LongRunCovariance { mean, bandwidth: h, matrix, autocovariances: stack })
}

/// FPCA of a functional time series with the long-run covariance in place of
/// the marginal covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicFpcaModel {
    pub fpca: FpcaModel,
    pub long_run: LongRunCovariance,
}

impl DynamicFpcaModel {
    pub fn k(&self) -> usize {
        self.fpca.k()
    }

    /// Scores as an N×K table in curve order.
    pub fn scores(&self) -> &[Vec<f64>] {
        &self.fpca.scores
    }
}

pub fn fit_dynamic_fpca(
    fts: &RegularFts,
    lrc: &LrcConfig,
    fconf: &FpcaConfig,
) -> Result<DynamicFpcaModel> {
    fconf.validate()?;
    let long_run = long_run_cov(fts, lrc)?;
    let grid = fts.grid.clone();
    let weights = quadrature_weights(&grid)?;
    let g = grid.len();
    let (vals, funcs) = weighted_eigen(&long_run.matrix, &weights);
    let lambda_max = vals.first().copied().unwrap_or(0.0).max(0.0);
    let scale = fts.curves.iter().flatten().map(|v| v * v).sum::<f64>() / (fts.len() * g) as f64;
    let span = grid[g - 1] - grid[0];
    let degenerate = lambda_max <= 1e-14 * span * (scale + f64::MIN_POSITIVE);

    let (eigenvalues, eigenfunctions, all_eigenvalues) = if degenerate {
        (vec![0.0], vec![vec![1.0 / span.sqrt(); g]], vec![0.0])
    } else {
        let positive: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 1e-12 * lambda_max).collect();
        let all: Vec<f64> = positive.iter().map(|&i| vals[i]).collect();
        let k = select_k_fve(&all, fconf.fve_threshold, fconf.max_k.min(all.len()));
        (
            all[..k].to_vec(),
            positive[..k].iter().map(|&i| funcs[i].clone()).collect(),
            all,
        )
    };
    let total: f64 = all_eigenvalues.iter().sum();
    let mut acc = 0.0;
    let fve = eigenvalues
        .iter()
        .map(|l| {
            acc += l;
            if total > 0.0 { (acc / total).min(1.0) } else { 1.0 }
        })
        .collect();
    let scores = fts
        .curves
        .iter()
        .map(|c| {
            let dev: Vec<f64> = c.iter().zip(&long_run.mean).map(|(y, m)| y - m).collect();
            eigenfunctions.iter().map(|f| inner_product(&weights, &dev, f)).collect()
        })
        .collect();
    let covariance = (0..g).map(|i| (0..g).map(|j| long_run.matrix[(i, j)]).collect()).collect();
    let fpca = FpcaModel {
        mean: GridCurve::new(grid.clone(), long_run.mean.clone())?,
        eigenvalues,
        eigenfunctions: eigenfunctions
            .into_iter()
            .map(|f| GridCurve::new(grid.clone(), f))
            .collect::<Result<_>>()?,
        all_eigenvalues,
        sigma2: 0.0,
        subject_ids: (1..=fts.len()).map(|n| n.to_string()).collect(),
        scores,
        fve,
        covariance,
        raw_variance: (0..g).map(|i| long_run.matrix[(i, i)]).collect(),
        bandwidths: Bandwidths { mean: f64::NAN, covariance: long_run.bandwidth, variance: f64::NAN },
        truncation_residual_note: false,
        degenerate,
        weights,
        grid,
    };
    Ok(DynamicFpcaModel { fpca, long_run })
}
