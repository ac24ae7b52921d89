//! Artifact writing: CSV tables, SVG plots and the run manifest.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::Result;
use crate::eval::BacktestReport;
use crate::fcca::{canonical_scores, CcaResult};
use crate::forecast::ForecastResult;
use crate::fpca::{modes_of_variation, FpcaModel};
use crate::fts::{DynamicFpcaModel, RegularFts};
use crate::funcdata::GridCurve;
use crate::pipeline::ClusterRun;
use crate::plot::{rainbow_color, LinePlot, Series};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of_file(path: &Path) -> Result<Self> {
        Ok(Self { path: path.display().to_string(), sha256: sha256_file(path)? })
    }
}

/// Writes files under one output directory and remembers their digests.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    written: Vec<FileDigest>,
    quiet: bool,
}

impl ArtifactWriter {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root, written: Vec::new(), quiet: false })
    }

    pub fn quiet(mut self) -> Self {
        self.quiet = true;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `contents` to `name` and prints `wrote <path>: <summary>`.
    pub fn write(&mut self, name: &str, contents: &str, summary: &str) -> Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.written.push(FileDigest { path: name.to_string(), sha256: sha256_hex(contents.as_bytes()) });
        if !self.quiet {
            println!("wrote {}: {summary}", path.display());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T, summary: &str) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text, summary)
    }

    pub fn written(&self) -> &[FileDigest] {
        &self.written
    }

    /// A writer for a subdirectory; merge it back with [`Self::absorb`].
    pub fn scoped(&self, sub: &str) -> Result<Self> {
        Ok(Self { quiet: self.quiet, ..Self::new(self.root.join(sub))? })
    }

    pub fn absorb(&mut self, sub: &str, other: Self) {
        self.written.extend(
            other.written.into_iter().map(|d| FileDigest { path: format!("{sub}/{}", d.path), sha256: d.sha256 }),
        );
    }

    /// Writes `manifest.json` listing the config, seed, inputs and outputs.
    pub fn finish(mut self, command: &str, config: &RunConfig, inputs: Vec<FileDigest>) -> Result<Vec<FileDigest>> {
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config,
            inputs,
            outputs: self.written.clone(),
        };
        self.write_json("manifest.json", &manifest, "run manifest")?;
        Ok(self.written)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Columns sharing the grid of `x`, one header name per column.
pub fn columns_csv(x_name: &str, x: &[f64], names: &[String], columns: &[&[f64]]) -> String {
    let mut s = x_name.to_string();
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for (i, xv) in x.iter().enumerate() {
        s.push_str(&xv.to_string());
        for c in columns {
            s.push(',');
            s.push_str(&c[i].to_string());
        }
        s.push('\n');
    }
    s
}

/// Header-less square matrix, one row per line.
pub fn matrix_csv<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut s = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn labelled_rows_csv(header: &str, ids: &[String], rows: &[Vec<f64>]) -> String {
    let mut s = format!("{header}\n");
    for (id, row) in ids.iter().zip(rows) {
        s.push_str(id);
        for v in row {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    s
}

fn numbered(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

fn curve_series(name: &str, c: &GridCurve) -> Series {
    Series::new(name, c.grid.clone(), c.values.clone())
}

pub fn write_fpca(w: &mut ArtifactWriter, model: &FpcaModel, x_label: &str) -> Result<()> {
    let k = model.k();
    w.write("mean.csv", &model.mean.to_csv(), "mean curve")?;
    w.write("variance.csv", &model.variance_curve().to_csv(), "variance curve")?;
    let corr = model.correlation_surface();
    w.write("correlation.csv", &matrix_csv(corr.iter().map(Vec::as_slice)), "correlation surface")?;
    let phis: Vec<&[f64]> = model.eigenfunctions.iter().map(|c| c.values.as_slice()).collect();
    w.write(
        "eigenfunctions.csv",
        &columns_csv("grid", &model.grid, &numbered("phi", k), &phis),
        &format!("{k} eigenfunctions"),
    )?;
    let mut fve = String::from("k,eigenvalue,fve\n");
    for (i, (l, f)) in model.eigenvalues.iter().zip(&model.fve).enumerate() {
        fve.push_str(&format!("{},{l},{f}\n", i + 1));
    }
    let total = model.fve.last().copied().unwrap_or(0.0);
    w.write("fve.csv", &fve, &format!("K = {k}, FVE = {:.4}", total))?;
    w.write(
        "scores.csv",
        &labelled_rows_csv(&format!("id,{}", numbered("xi", k).join(",")), &model.subject_ids, &model.scores),
        &format!("{} subjects x {k} scores", model.subject_ids.len()),
    )?;
    let mut modes_cols = Vec::new();
    let mut modes_names = Vec::new();
    for j in 1..=k.min(3) {
        let (plus, minus) = modes_of_variation(model, j, 2.0)?;
        modes_names.push(format!("plus{j}"));
        modes_names.push(format!("minus{j}"));
        modes_cols.push(plus.values);
        modes_cols.push(minus.values);
    }
    let refs: Vec<&[f64]> = modes_cols.iter().map(Vec::as_slice).collect();
    w.write("modes.csv", &columns_csv("grid", &model.grid, &modes_names, &refs), "modes of variation (mean +/- 2 sd)")?;
    w.write_json("model.json", model, "FPCA model")?;

    let mean_plot = LinePlot::new("Mean curve", x_label, "value").with(curve_series("mean", &model.mean));
    w.write("mean.svg", &mean_plot.to_svg(), "mean curve plot")?;
    let mut eig_plot = LinePlot::new("Eigenfunctions", x_label, "value");
    for (i, c) in model.eigenfunctions.iter().enumerate().take(8) {
        eig_plot = eig_plot.with(curve_series(&format!("phi{}", i + 1), c));
    }
    w.write("eigenfunctions.svg", &eig_plot.to_svg(), "eigenfunction plot")
}

pub fn write_fcca(w: &mut ArtifactWriter, result: &CcaResult) -> Result<()> {
    let mut rho = String::from("k,rho\n");
    for (i, r) in result.correlations.iter().enumerate() {
        rho.push_str(&format!("{},{r}\n", i + 1));
    }
    let summary = match result.correlations.first() {
        Some(r) => format!("{} pairs, rho1 = {r:.4}", result.correlations.len()),
        None => "no canonical pairs".into(),
    };
    w.write("correlations.csv", &rho, &summary)?;
    if let Some((u1, _)) = result.weight_functions.first() {
        let mut names = Vec::new();
        let mut cols: Vec<&[f64]> = Vec::new();
        for (i, (u, v)) in result.weight_functions.iter().enumerate() {
            names.push(format!("u{}", i + 1));
            names.push(format!("v{}", i + 1));
            cols.push(&u.values);
            cols.push(&v.values);
        }
        w.write("weights.csv", &columns_csv("grid", &u1.grid, &names, &cols), "canonical weight functions")?;
        let (u, v) = &result.weight_functions[0];
        let plot = LinePlot::new("First canonical weight functions", "day", "weight")
            .with(curve_series("u1 (cases)", u))
            .with(curve_series("v1 (deaths)", v).dashed());
        w.write("weights.svg", &plot.to_svg(), "weight function plot")?;
    }
    if !result.correlations.is_empty() {
        let mut s = String::from("state,x_score,y_score\n");
        for (id, x, y) in canonical_scores(result, 1)? {
            s.push_str(&format!("{id},{x},{y}\n"));
        }
        w.write("scores.csv", &s, "first-pair canonical scores")?;
    }
    w.write_json("cca.json", result, "FCCA result")
}

pub fn write_cluster(w: &mut ArtifactWriter, run: &ClusterRun) -> Result<()> {
    let mut s = String::from("state,cluster\n");
    for (id, l) in run.assignment.ids.iter().zip(&run.assignment.labels) {
        s.push_str(&format!("{id},{}\n", l + 1));
    }
    w.write("clusters.csv", &s, &format!("{} states in {} clusters", run.assignment.ids.len(), run.elbow.k_star))?;
    let mut e = String::from("k,wcss\n");
    for (i, v) in run.elbow.wcss.iter().enumerate() {
        e.push_str(&format!("{},{v}\n", i + 1));
    }
    let weak = if run.elbow.weak_elbow { " (weak elbow)" } else { "" };
    w.write("elbow.csv", &e, &format!("K* = {}{weak}", run.elbow.k_star))?;
    let ks: Vec<f64> = (1..=run.elbow.wcss.len()).map(|k| k as f64).collect();
    let plot = LinePlot::new("Within-cluster sum of squares", "K", "WCSS")
        .with(Series::new("WCSS", ks, run.elbow.wcss.clone()));
    w.write("elbow.svg", &plot.to_svg(), "elbow plot")?;
    w.write_json("mixture.json", &run.model, "mixture model")
}

pub fn write_fts(w: &mut ArtifactWriter, curves: &RegularFts, dynamic: &DynamicFpcaModel) -> Result<()> {
    w.write("rainbow.csv", &curves.to_rainbow_csv(), &format!("{} growth-rate curves", curves.len()))?;
    let n = curves.len();
    let mut plot = LinePlot::new("Daily growth rate curves", "day in segment", "growth rate (%)");
    plot.legend = false;
    for (i, c) in curves.curves.iter().enumerate() {
        plot = plot.with(Series::new(format!("{}", i + 1), curves.grid.clone(), c.clone()).color(rainbow_color(i, n)));
    }
    w.write("rainbow.svg", &plot.to_svg(), "rainbow plot")?;
    let lrc = &dynamic.long_run.matrix;
    let rows: Vec<Vec<f64>> = lrc.row_iter().map(|r| r.iter().copied().collect()).collect();
    w.write(
        "long_run_cov.csv",
        &matrix_csv(rows.iter().map(Vec::as_slice)),
        &format!("long-run covariance, bandwidth {:.3}", dynamic.long_run.bandwidth),
    )?;
    let k = dynamic.k();
    let phis: Vec<&[f64]> = dynamic.fpca.eigenfunctions.iter().map(|c| c.values.as_slice()).collect();
    w.write(
        "dynamic_eigenfunctions.csv",
        &columns_csv("grid", &dynamic.fpca.grid, &numbered("phi", k), &phis),
        &format!("K = {k} dynamic components"),
    )?;
    let ids: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
    w.write(
        "dynamic_scores.csv",
        &labelled_rows_csv(&format!("curve,{}", numbered("beta", k).join(",")), &ids, dynamic.scores()),
        "dynamic FPC scores",
    )
}

pub fn write_forecast(w: &mut ArtifactWriter, f: &ForecastResult, history: Option<&RegularFts>) -> Result<()> {
    let flag = if f.calibrated { "" } else { ", uncalibrated" };
    w.write(
        "forecast.csv",
        &f.to_csv(None),
        &format!("{}-day forecast from {}, delta = {:.2}{flag}", f.counts.len(), f.dates[0], f.delta_alpha),
    )?;
    w.write_json("forecast.json", f, "forecast diagnostics")?;
    let x: Vec<f64> = (1..=f.counts.len()).map(|j| j as f64).collect();
    let mut plot = LinePlot::new(format!("Forecast from {}", f.dates[0]), "days ahead", "cumulative cases");
    if let Some(h) = history {
        if let Some(last) = h.curves.last() {
            let len = last.len();
            let past: Vec<f64> = (0..len).map(|i| i as f64 + 1.0 - len as f64).collect();
            plot = plot.with(Series::new("observed", past, last.clone()).color("#333"));
        }
    }
    plot = plot
        .with(Series::new("point", x.clone(), f.counts.clone()))
        .with(Series::new("lower", x.clone(), f.lower.clone()).dashed())
        .with(Series::new("upper", x, f.upper.clone()).dashed());
    w.write("forecast.svg", &plot.to_svg(), "forecast plot")
}

pub fn write_backtest(w: &mut ArtifactWriter, report: &BacktestReport, scale_plots: bool) -> Result<()> {
    let ok = report.successful_folds();
    w.write("rmsfe.csv", &report.rmsfe_csv(), &format!("RMSFE over {ok} folds"))?;
    w.write("interval_score.csv", &report.score_csv(), &format!("interval score over {ok} folds"))?;
    w.write_json("backtest.json", report, "backtest folds")?;
    let factor = if scale_plots { 10.0 } else { 1.0 };
    let suffix = if scale_plots { " (x10)" } else { "" };
    let x: Vec<f64> = (1..=report.rmsfe_fts.len()).map(|j| j as f64).collect();
    let rmsfe = LinePlot::new("RMSFE", "days ahead", format!("RMSFE{suffix}"))
        .with(Series::new("FTS", x.clone(), report.rmsfe_fts.clone()))
        .with(Series::new("ARIMA", x.clone(), report.rmsfe_arima.clone()).dashed())
        .scaled(factor);
    w.write("rmsfe.svg", &rmsfe.to_svg(), "RMSFE plot")?;
    let score = LinePlot::new("Mean interval score", "days ahead", format!("interval score{suffix}"))
        .with(Series::new("FTS", x.clone(), report.score_fts.clone()))
        .with(Series::new("ARIMA", x, report.score_arima.clone()).dashed())
        .scaled(factor);
    w.write("interval_score.svg", &score.to_svg(), "interval score plot")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn writer_records_outputs_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        fs::write(&input, "abc").unwrap();
        let mut w = ArtifactWriter::new(dir.path().join("out")).unwrap().quiet();
        w.write("sub/a.csv", "x\n1\n", "a").unwrap();
        let out = w.finish("test", &RunConfig::default(), vec![FileDigest::of_file(&input).unwrap()]).unwrap();
        assert_eq!(out.len(), 2);
        let text = fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["inputs"][0]["sha256"], sha256_hex(b"abc"));
        assert_eq!(v["outputs"][0]["path"], "sub/a.csv");
        assert_eq!(v["seed"], crate::DEFAULT_SEED);
    }

    #[test]
    fn columns_layout() {
        let s = columns_csv("grid", &[0.0, 1.0], &["a".into(), "b".into()], &[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(s, "grid,a,b\n0,1,3\n1,2,4\n");
        assert_eq!(matrix_csv([[1.0, 0.5].as_slice()]), "1,0.5\n");
    }
}
