//! PACE recovery on simulated rank-2 processes with a known spectrum.

use covfda::fpca::{fit_pace, FpcaConfig, FpcaModel};
use covfda::funcdata::{inner_product, uniform_grid, SmootherConfig};
use covfda::linalg::correlation;
use covfda::{IrregularFunctionalDataset, Subject};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::{PI, SQRT_2};

fn phi1(t: f64) -> f64 {
    SQRT_2 * (2.0 * PI * t).sin()
}
fn phi2(t: f64) -> f64 {
    SQRT_2 * (2.0 * PI * t).cos()
}
fn mu(t: f64) -> f64 {
    1.0 + t + (PI * t).sin()
}

struct Sim {
    data: IrregularFunctionalDataset,
    scores: Vec<[f64; 2]>,
}

fn simulate(n: usize, seed: u64, sparse: bool) -> Sim {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let grid = uniform_grid(0.0, 1.0, 51);
    let mut subjects = Vec::new();
    let mut scores = Vec::new();
    for i in 0..n {
        let xi = [2.0 * z.sample(&mut rng), z.sample(&mut rng)];
        let times: Vec<f64> = if sparse {
            let m = rng.random_range(6..12);
            let mut t: Vec<f64> = (0..m).map(|_| grid[rng.random_range(0..grid.len())]).collect();
            t.sort_by(f64::total_cmp);
            t.dedup();
            if t.len() < 2 {
                t = vec![0.0, 1.0];
            }
            t
        } else {
            grid.clone()
        };
        let values = times
            .iter()
            .map(|&t| mu(t) + xi[0] * phi1(t) + xi[1] * phi2(t) + 0.1 * z.sample(&mut rng))
            .collect();
        subjects.push(Subject::new(format!("s{i}"), times, values));
        scores.push(xi);
    }
    Sim { data: IrregularFunctionalDataset::new(subjects, (0.0, 1.0)).unwrap(), scores }
}

fn aligned_inner(model: &FpcaModel, k: usize, f: fn(f64) -> f64) -> f64 {
    let truth: Vec<f64> = model.grid.iter().map(|&t| f(t)).collect();
    inner_product(&model.weights, &model.eigenfunctions[k].values, &truth).abs()
}

#[test]
fn dense_rank_two_spectrum_is_recovered() {
    let sim = simulate(200, 2020, false);
    let model = fit_pace(&sim.data, &SmootherConfig::default(), &FpcaConfig::default()).unwrap();
    assert!(model.k() >= 2);
    let l = &model.eigenvalues;
    assert!((l[0] - 4.0).abs() < 0.15 * 4.0, "lambda1 {}", l[0]);
    assert!((l[1] - 1.0).abs() < 0.15, "lambda2 {}", l[1]);
    assert!(aligned_inner(&model, 0, phi1) > 0.95);
    assert!(aligned_inner(&model, 1, phi2) > 0.95);
    assert!(model.sigma2 >= 0.0);

    // Gram matrix of eigenfunctions under quadrature is the identity.
    for a in 0..model.k() {
        for b in 0..model.k() {
            let ip = inner_product(
                &model.weights,
                &model.eigenfunctions[a].values,
                &model.eigenfunctions[b].values,
            );
            let target = if a == b { 1.0 } else { 0.0 };
            assert!((ip - target).abs() <= 1e-6, "<phi{a},phi{b}> = {ip}");
        }
    }
    assert!(model.eigenvalues.windows(2).all(|w| w[0] >= w[1] && w[1] > 0.0));
    assert!(model.fve.windows(2).all(|w| w[1] >= w[0]));
    assert!(*model.fve.last().unwrap() <= 1.0);

    // Scores track the generating scores.
    for k in 0..2 {
        let est: Vec<f64> = model.scores.iter().map(|s| s[k]).collect();
        let truth: Vec<f64> = sim.scores.iter().map(|s| s[k]).collect();
        assert!(correlation(&est, &truth).abs() > 0.95, "component {k}");
    }
}

#[test]
fn fitted_scores_are_centred_with_eigenvalue_variance() {
    let sim = simulate(200, 99, false);
    let model = fit_pace(&sim.data, &SmootherConfig::default(), &FpcaConfig::default()).unwrap();
    let n = model.scores.len() as f64;
    for k in 0..2 {
        let col: Vec<f64> = model.scores.iter().map(|s| s[k]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 * var.sqrt() / n.sqrt(), "mean {mean}");
        let lambda = model.eigenvalues[k];
        assert!((var - lambda).abs() < 0.25 * lambda, "var {var} vs {lambda}");
    }
}

#[test]
fn reconstruction_error_non_increasing_in_k() {
    let sim = simulate(60, 5, false);
    let model = fit_pace(&sim.data, &SmootherConfig::default(), &FpcaConfig::default()).unwrap();
    let mut prev = f64::INFINITY;
    for k in 0..=model.k() {
        let err: f64 = sim
            .data
            .subjects()
            .iter()
            .zip(&model.scores)
            .map(|(s, xi)| {
                let fit = model.reconstruct(xi, k);
                s.values.iter().zip(&fit).map(|(y, f)| (y - f).powi(2)).sum::<f64>()
            })
            .sum();
        assert!(err <= prev * (1.0 + 1e-9), "k={k}: {err} > {prev}");
        prev = err;
    }
}

#[test]
fn subject_order_reversal_leaves_eigenpairs() {
    let sim = simulate(40, 17, false);
    let mut rev: Vec<Subject> = sim.data.subjects().to_vec();
    rev.reverse();
    let rev = IrregularFunctionalDataset::new(rev, (0.0, 1.0)).unwrap();
    let a = fit_pace(&sim.data, &SmootherConfig::default(), &FpcaConfig::default()).unwrap();
    let b = fit_pace(&rev, &SmootherConfig::default(), &FpcaConfig::default()).unwrap();
    assert_eq!(a.k(), b.k());
    for k in 0..2 {
        assert!((a.eigenvalues[k] - b.eigenvalues[k]).abs() < 1e-8 * a.eigenvalues[k]);
        let ip = inner_product(&a.weights, &a.eigenfunctions[k].values, &b.eigenfunctions[k].values);
        assert!((ip.abs() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn sparse_design_still_finds_leading_component() {
    let sim = simulate(300, 42, true);
    let model = fit_pace(&sim.data, &SmootherConfig::default(), &FpcaConfig::with_fve(0.95)).unwrap();
    assert!(aligned_inner(&model, 0, phi1) > 0.9);
    assert!((model.eigenvalues[0] - 4.0).abs() < 0.3 * 4.0, "{}", model.eigenvalues[0]);
    let est: Vec<f64> = model.scores.iter().map(|s| s[0]).collect();
    let truth: Vec<f64> = sim.scores.iter().map(|s| s[0]).collect();
    assert!(correlation(&est, &truth).abs() > 0.8);
}

#[test]
fn aic_selection_runs_and_is_bounded() {
    let sim = simulate(50, 8, true);
    let cfg = FpcaConfig { selection: covfda::fpca::Selection::Aic, max_k: 5, ..FpcaConfig::default() };
    let model = fit_pace(&sim.data, &SmootherConfig::default(), &cfg).unwrap();
    assert!(model.k() >= 1 && model.k() <= 5);
}
