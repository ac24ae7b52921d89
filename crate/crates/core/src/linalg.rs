//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

/// Eigenpairs of the integral operator with kernel `cov` under quadrature
/// `weights`, sorted by decreasing eigenvalue. Eigenfunctions are returned on
/// the grid, orthonormal in the weighted inner product, and sign-normalized
/// so that ⟨φ, 1⟩ ≥ 0 (ties broken by φ at the first grid point).
pub fn weighted_eigen(cov: &DMatrix<f64>, weights: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = weights.len();
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut b = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = sqrt_w[i] * 0.5 * (cov[(i, j)] + cov[(j, i)]) * sqrt_w[j];
        }
    }
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = Vec::with_capacity(n);
    let mut functions = Vec::with_capacity(n);
    for &k in &order {
        let v = eig.eigenvectors.column(k);
        let mut phi: Vec<f64> = (0..n).map(|i| v[i] / sqrt_w[i]).collect();
        orient(&mut phi, weights);
        values.push(eig.eigenvalues[k]);
        functions.push(phi);
    }
    (values, functions)
}

/// Flips `phi` so that its weighted integral is non-negative.
pub fn orient(phi: &mut [f64], weights: &[f64]) {
    let integral: f64 = phi.iter().zip(weights).map(|(p, w)| p * w).sum();
    let scale: f64 = phi.iter().map(|p| p.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let flip = if integral.abs() > 1e-12 * scale * weights.iter().sum::<f64>() {
        integral < 0.0
    } else {
        phi.first().is_some_and(|&p| p < 0.0)
    };
    if flip {
        phi.iter_mut().for_each(|p| *p = -*p);
    }
}

/// Cholesky factor of `m`, adding ridge jitter `start·trace/n`, escalating
/// ×10 up to `stop·trace/n`. Returns the factor and the jitter used.
pub fn cholesky_with_jitter(
    m: &DMatrix<f64>,
    start: f64,
    stop: f64,
) -> Option<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some((c, 0.0));
    }
    let n = m.nrows().max(1) as f64;
    let base = (m.trace() / n).abs().max(f64::MIN_POSITIVE);
    let mut rel = start;
    while rel <= stop * (1.0 + 1e-12) {
        let jitter = rel * base;
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Some((c, jitter));
        }
        rel *= 10.0;
    }
    None
}

/// Inverse square root of a symmetric positive-definite matrix.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if eig.eigenvalues.iter().any(|&l| !(l > 1e-14 * max) || max <= 0.0) {
        return None;
    }
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()));
    let v = &eig.eigenvectors;
    Some(v * DMatrix::from_diagonal(&d) * v.transpose())
}

/// Sample covariance (divisor n−1) of the columns of `x`.
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let centered = center_columns(x);
    centered.transpose() * &centered / (n.saturating_sub(1).max(1) as f64)
}

pub fn center_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for j in 0..x.ncols() {
        let m = x.column(j).mean();
        c.column_mut(j).add_scalar_mut(-m);
    }
    c
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with divisor n−1.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len().saturating_sub(1).max(1)) as f64
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcdata::{quadrature_weights, uniform_grid};

    #[test]
    fn weighted_eigen_is_orthonormal_under_quadrature() {
        let grid = uniform_grid(0.0, 2.0, 31);
        let w = quadrature_weights(&grid).unwrap();
        let n = grid.len();
        let cov = DMatrix::from_fn(n, n, |i, j| (-(grid[i] - grid[j]).powi(2)).exp());
        let (vals, funcs) = weighted_eigen(&cov, &w);
        assert!(vals.windows(2).all(|p| p[0] >= p[1]));
        for a in 0..5 {
            for b in 0..5 {
                let ip: f64 = (0..n).map(|i| w[i] * funcs[a][i] * funcs[b][i]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((ip - target).abs() < 1e-10);
            }
            let integral: f64 = (0..n).map(|i| w[i] * funcs[a][i]).sum();
            assert!(integral >= -1e-12 || funcs[a][0] >= 0.0);
        }
    }

    #[test]
    fn jitter_rescues_singular_matrix() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        let (_, jitter) = cholesky_with_jitter(&m, 1e-8, 1e-2).unwrap();
        assert!(jitter > 0.0);
    }

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = inv_sqrt_spd(&m).unwrap();
        let prod = &r * &r * &m;
        assert!((prod - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }
}
