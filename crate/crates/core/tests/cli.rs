mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use covfda::output::sha256_file;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_covfda"));
    c.env_remove("FDA_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cases = common::write_synthetic(dir.path(), 7);
    (dir, cases)
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn report_writes_every_stage_and_manifest() {
    let (dir, cases) = setup();
    let out = dir.path().join("out");
    let o = run(&["report", "--cases", cases.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for f in [
        "ingest/series.csv",
        "fpca/fve.csv",
        "fcca/weights.csv",
        "cluster/full/clusters.csv",
        "cluster/comparison.csv",
        "fts/rainbow.csv",
        "fts/rainbow.svg",
        "forecast/forecast.csv",
        "backtest/rmsfe.svg",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("wrote ")).count(), outputs.len() + 1);
    for entry in outputs {
        let path = out.join(entry["path"].as_str().unwrap());
        assert_eq!(sha256_file(&path).unwrap(), entry["sha256"].as_str().unwrap());
    }
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap(), sha256_file(&cases).unwrap());
    assert_eq!(manifest["seed"], covfda::DEFAULT_SEED);

    let rainbow = fs::read_to_string(out.join("fts/rainbow.csv")).unwrap();
    assert!(rainbow.starts_with("curve_index,grid_point,value\n"));
    assert_eq!(rainbow.lines().count(), 1 + 11 * 13);
}

#[test]
fn forecast_writes_table_shaped_csv() {
    let (dir, cases) = setup();
    let out = dir.path().join("out");
    let o = run(&[
        "forecast",
        "--cases",
        cases.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--horizon",
        "13",
        "--alpha",
        "0.2",
        "--seed",
        "20200815",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("forecast.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "date,point,lower,upper");
    assert_eq!(lines.len(), 14);
    assert!(lines[1].starts_with("2020-08-26,"));
    assert!(lines[13].starts_with("2020-09-07,"));
    assert!(stdout(&o).contains("13-day forecast from 2020-08-26"));

    let short = dir.path().join("short");
    let o = run(&["forecast", "--cases", cases.to_str().unwrap(), "--out", short.to_str().unwrap(), "--horizon", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(short.join("forecast.csv")).unwrap().lines().count(), 6);
}

#[test]
fn fpca_and_cluster_subcommands() {
    let (dir, cases) = setup();
    let out = dir.path().join("fpca");
    let o = run(&["fpca", "--cases", cases.to_str().unwrap(), "--window", "2020-03-01:2020-06-30", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("K = "));
    for f in ["mean.csv", "variance.csv", "eigenfunctions.csv", "fve.csv", "mean.svg", "eigenfunctions.svg"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("2020-03-01:2020-06-30"));

    let out = dir.path().join("cluster");
    let o = run(&["cluster", "--cases", cases.to_str().unwrap(), "--window", "2020-04-01:2020-08-15", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let clusters = fs::read_to_string(out.join("clusters.csv")).unwrap();
    assert!(clusters.starts_with("state,cluster\n"));
    assert_eq!(clusters.lines().count(), 51);
    assert!(fs::read_to_string(out.join("elbow.csv")).unwrap().starts_with("k,wcss\n"));
}

#[test]
fn reruns_are_bit_identical() {
    let (dir, cases) = setup();
    let out = dir.path().join("out");
    let args = ["forecast", "--cases", cases.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "11"];
    assert!(run(&args).status.success());
    let first = snapshot(&out);
    fs::remove_dir_all(&out).unwrap();
    assert!(run(&args).status.success());
    assert_eq!(first, snapshot(&out));
}

#[test]
fn config_file_and_flag_precedence() {
    let (dir, cases) = setup();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("from-config");
    fs::write(
        &cfg,
        format!(
            "seed = 5\nout = {:?}\n[data]\ncases = {:?}\n[windows]\ningest = \"2020-03-01:2020-03-31\"\n",
            out.to_str().unwrap(),
            cases.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = run(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 5);
    assert!(stdout(&o).contains("x 31 days"));

    let o = run(&["ingest", "--config", cfg.to_str().unwrap(), "--seed", "9"]);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["cluster"]["em"]["seed"], 9);
}

#[test]
fn output_directory_from_environment() {
    let (dir, cases) = setup();
    let out = dir.path().join("env-out");
    let o = bin().env("FDA_OUT", &out).args(["ingest", "--cases", cases.to_str().unwrap()]).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("series.csv").exists());
    assert!(out.join("national.csv").exists());
}

#[test]
fn usage_errors_exit_2() {
    let (dir, cases) = setup();
    let c = cases.to_str().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["fpca", "--no-such-flag"],
        vec![],
        vec!["fpca", "--out", o],
        vec!["fpca", "--cases", c, "--out", o, "--window", "2020-13-01:2020-14-01"],
        vec!["forecast", "--cases", c, "--out", o, "--horizon", "20"],
        vec!["forecast", "--cases", c, "--out", o, "--alpha", "1.5"],
        vec!["report", "--cases", c, "--out", o, "--window", "2020-04-01:2020-05-01"],
    ] {
        let r = run(&args);
        assert_eq!(r.status.code(), Some(2), "{args:?}: {}", stderr(&r));
    }
}

#[test]
fn module_errors_exit_1_with_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "when,where\n1,2\n").unwrap();
    let out = dir.path().join("o");
    let r = run(&["ingest", "--cases", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).starts_with("error: ingest:"), "{}", stderr(&r));

    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "seed = \"abc\"\n").unwrap();
    let r = run(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("config:"));

    let (_d, cases) = setup();
    let r = run(&["fts", "--cases", cases.to_str().unwrap(), "--out", out.to_str().unwrap(), "--window", "2020-04-04:2020-04-20"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("fts:"), "{}", stderr(&r));
}
