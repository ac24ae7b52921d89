//! Synthetic NYT-format case files shared by the integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use covfda::ingest::{load_populations, BUNDLED_POPULATIONS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const FIRST_DAY: (i32, u32, u32) = (2020, 1, 21);
pub const LAST_DAY: (i32, u32, u32) = (2020, 9, 7);

fn day(ymd: (i32, u32, u32)) -> NaiveDate {
    NaiveDate::from_ymd_opt(ymd.0, ymd.1, ymd.2).unwrap()
}

/// Four epidemic shapes (early spike, early plateau, late surge, slow burn)
/// assigned round-robin over the states, with multiplicative noise on
/// the daily increments and deaths following cases with a lag.
pub fn synthetic_nyt_csv(seed: u64) -> String {
    let pops = load_populations(BUNDLED_POPULATIONS.as_bytes()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::<f64>::new(0.0, 0.08).unwrap();
    let (first, last) = (day(FIRST_DAY), day(LAST_DAY));
    let days = (last - first).num_days() as usize + 1;
    let shapes: [(f64, f64, f64, f64); 4] =
        [(12000.0, 70.0, 7.0, 10.0), (4000.0, 80.0, 10.0, 5.0), (9000.0, 160.0, 9.0, 15.0), (2500.0, 120.0, 20.0, 8.0)];
    let mut rows: Vec<(NaiveDate, String, String, u64, u64)> = Vec::new();
    for (i, (state, pop)) in pops.iter().enumerate() {
        let (height, onset, scale, slope) = shapes[i % 4];
        let jitter = (i % 5) as f64 * 3.0;
        let per_million = |t: f64| {
            let x = (t - onset - jitter) / scale;
            height / (1.0 + (-x).exp()) + slope * (t - onset - jitter).max(0.0)
        };
        let mut cases = 0.0f64;
        let mut history = Vec::with_capacity(days);
        for t in 0..days {
            let inc = (per_million(t as f64) - per_million(t as f64 - 1.0)).max(0.0);
            cases += inc * (1.0 + noise.sample(&mut rng)).max(0.0) * pop / 1e6;
            history.push(cases.round());
        }
        for t in 0..days {
            let c = history[t] as u64;
            if c == 0 {
                continue;
            }
            let d = (0.03 * history[t.saturating_sub(12)]).round() as u64;
            rows.push((first + Days::new(t as u64), state.clone(), format!("{:02}", i + 1), c, d));
        }
    }
    rows.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    let mut s = String::from("date,state,fips,cases,deaths\n");
    for (d, st, f, c, k) in rows {
        s.push_str(&format!("{d},{st},{f},{c},{k}\n"));
    }
    s
}

pub fn write_synthetic(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join("us-states.csv");
    std::fs::write(&path, synthetic_nyt_csv(seed)).unwrap();
    path
}
