use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use covfda::config::{parse_window, RunConfig};
use covfda::eval::{count_prefix, expanding_window};
use covfda::fclust::adjusted_rand_index;
use covfda::forecast::{arima_baseline, fts_forecast, growth_fts};
use covfda::fts::fit_dynamic_fpca;
use covfda::ingest::{national_totals, series_to_csv, DateWindow, BUNDLED_POPULATIONS};
use covfda::output::{self, sha256_hex, ArtifactWriter, FileDigest};
use covfda::pipeline::{national_fts, run_cluster, run_fcca, run_fpca, Inputs};
use covfda::Error;

#[derive(Parser)]
#[command(name = "covfda", version, about = "Functional data analysis of COVID-19 case counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Standardized per-million state series and national totals.
    Ingest,
    /// PACE functional principal components of daily new cases.
    Fpca,
    /// Canonical correlation between cumulative cases and deaths.
    Fcca,
    /// Mixture-model clustering of cumulative case curves.
    Cluster,
    /// Growth-rate curves, long-run covariance and dynamic FPCA.
    Fts,
    /// Next-segment forecast with bootstrap intervals.
    Forecast,
    /// Expanding-window comparison against the ARIMA baseline.
    Backtest,
    /// Every stage, each in its own subdirectory.
    Report,
}

#[derive(Args)]
struct Flags {
    /// NYT-format state case file.
    #[arg(long, global = true)]
    cases: Option<PathBuf>,
    /// `state,population` file; the bundled 2019 estimates otherwise.
    #[arg(long, global = true)]
    pop: Option<PathBuf>,
    /// Study window `YYYY-MM-DD:YYYY-MM-DD` for the selected stage.
    #[arg(long, global = true)]
    window: Option<String>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "FDA_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Forecast horizon in days, at most one segment.
    #[arg(long, global = true, default_value_t = 13)]
    horizon: usize,
    /// Interval significance level.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Multiply backtest plot values by 10.
    #[arg(long, global = true)]
    scale_plots: bool,
}

enum Failure {
    Usage(String),
    Module(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Module(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            ExitCode::from(2)
        }
        Err(Failure::Module(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Outcome<()> {
    let flags = cli.flags;
    let mut config = match &flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &flags.cases {
        config.data.cases = Some(p.clone());
    }
    if let Some(p) = &flags.pop {
        config.data.population = Some(p.clone());
    }
    if let Some(p) = &flags.out {
        config.out = Some(p.clone());
    }
    let seed = flags.seed.unwrap_or(config.seed);
    config.apply_seed(seed);
    if let Some(a) = flags.alpha {
        if !(a > 0.0 && a < 1.0) {
            return Err(Failure::Usage(format!("--alpha must lie in (0, 1), got {a}")));
        }
        config.apply_alpha(a);
    }
    if let Some(w) = &flags.window {
        parse_window(w).map_err(|e| Failure::Usage(e.to_string()))?;
        let slot = match cli.command {
            Command::Ingest => &mut config.windows.ingest,
            Command::Fpca => &mut config.windows.fpca,
            Command::Fcca => &mut config.windows.fcca,
            Command::Cluster => &mut config.windows.cluster,
            Command::Fts | Command::Forecast | Command::Backtest => &mut config.windows.fts,
            Command::Report => {
                return Err(Failure::Usage("report takes its windows from the config file, not --window".into()))
            }
        };
        *slot = w.clone();
    }
    let grid_len = config.fts.segment_length - 1;
    if flags.horizon == 0 || flags.horizon > grid_len {
        return Err(Failure::Usage(format!("--horizon must be between 1 and {grid_len} days")));
    }
    config.validate()?;

    let Some(cases) = config.data.cases.clone() else {
        return Err(Failure::Usage("no case file: pass --cases or set data.cases in the config".into()));
    };
    let inputs = Inputs::load(&cases, config.data.population.as_deref())?;
    let mut digests = vec![FileDigest::of_file(&cases)?];
    digests.push(match &config.data.population {
        Some(p) => FileDigest::of_file(p)?,
        None => FileDigest { path: "bundled:population_2019.csv".into(), sha256: sha256_hex(BUNDLED_POPULATIONS.as_bytes()) },
    });

    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut w = ArtifactWriter::new(out)?;
    let ctx = Context { inputs: &inputs, config: &config, horizon: flags.horizon, scale_plots: flags.scale_plots };
    let name = match cli.command {
        Command::Ingest => ctx.ingest(&mut w).map(|_| "ingest"),
        Command::Fpca => ctx.fpca(&mut w).map(|_| "fpca"),
        Command::Fcca => ctx.fcca(&mut w).map(|_| "fcca"),
        Command::Cluster => ctx.cluster(&mut w).map(|_| "cluster"),
        Command::Fts => ctx.fts(&mut w).map(|_| "fts"),
        Command::Forecast => ctx.forecast(&mut w).map(|_| "forecast"),
        Command::Backtest => ctx.backtest(&mut w).map(|_| "backtest"),
        Command::Report => ctx.report(&mut w).map(|_| "report"),
    }?;
    w.finish(name, &config, digests)?;
    Ok(())
}

struct Context<'a> {
    inputs: &'a Inputs,
    config: &'a RunConfig,
    horizon: usize,
    scale_plots: bool,
}

impl Context<'_> {
    fn window(&self, s: &str) -> covfda::Result<DateWindow> {
        parse_window(s)
    }

    fn ingest(&self, w: &mut ArtifactWriter) -> covfda::Result<()> {
        let window = self.window(&self.config.windows.ingest)?;
        let series = self.inputs.states(window)?;
        let days = series.first().map_or(0, |s| s.len());
        w.write("series.csv", &series_to_csv(&series), &format!("{} states x {days} days per million", series.len()))?;
        let mut s = String::from("date,cases,deaths\n");
        let mut rows = 0;
        for (d, c, k) in national_totals(&self.inputs.records)? {
            if d >= window.start && d <= window.end {
                s.push_str(&format!("{d},{c},{k}\n"));
                rows += 1;
            }
        }
        w.write("national.csv", &s, &format!("{rows} days of national totals"))
    }

    fn fpca(&self, w: &mut ArtifactWriter) -> covfda::Result<()> {
        let window = self.window(&self.config.windows.fpca)?;
        let model = run_fpca(self.inputs, window, &self.config.smoother, &self.config.fpca)?;
        output::write_fpca(w, &model, &format!("days since {}", window.start))
    }

    fn fcca(&self, w: &mut ArtifactWriter) -> covfda::Result<()> {
        let window = self.window(&self.config.windows.fcca)?;
        let result = run_fcca(self.inputs, window, &self.config.fcca)?;
        for warning in &result.warnings {
            eprintln!("warning: {warning}");
        }
        output::write_fcca(w, &result)
    }

    fn cluster(&self, w: &mut ArtifactWriter) -> covfda::Result<()> {
        let window = self.window(&self.config.windows.cluster)?;
        let run = run_cluster(self.inputs, window, &self.config.smoother, &self.config.cluster)?;
        output::write_cluster(w, &run)
    }

    /// Clusters both windows and compares the two partitions.
    fn cluster_pair(&self, w: &mut ArtifactWriter) -> covfda::Result<()> {
        let full = run_cluster(
            self.inputs,
            self.window(&self.config.windows.cluster)?,
            &self.config.smoother,
            &self.config.cluster,
        )?;
        let truncated = run_cluster(
            self.inputs,
            self.window(&self.config.windows.cluster_truncated)?,
            &self.config.smoother,
            &self.config.cluster,
        )?;
        let mut sub = w.scoped("full")?;
        output::write_cluster(&mut sub, &full)?;
        w.absorb("full", sub);
        let mut sub = w.scoped("truncated")?;
        output::write_cluster(&mut sub, &truncated)?;
        w.absorb("truncated", sub);
        let ari = adjusted_rand_index(&full.assignment.labels, &truncated.assignment.labels);
        let mut s = String::from("state,full,truncated\n");
        for ((id, a), b) in full.assignment.ids.iter().zip(&full.assignment.labels).zip(&truncated.assignment.labels) {
            s.push_str(&format!("{id},{},{}\n", a + 1, b + 1));
        }
        w.write("comparison.csv", &s, &format!("adjusted Rand index {ari:.3}"))
    }

    fn fts(&self, w: &mut ArtifactWriter) -> covfda::Result<()> {
        let counts = self.counts()?;
        let cfg = &self.config.fts.forecast;
        let growth = growth_fts(&counts, cfg)?;
        let dynamic = fit_dynamic_fpca(&growth, &cfg.lrc, &cfg.fpca)?;
        output::write_fts(w, &growth, &dynamic)
    }

    fn counts(&self) -> covfda::Result<covfda::fts::RegularFts> {
        let window = self.window(&self.config.windows.fts)?;
        national_fts(self.inputs, window, self.config.fts.segment_length, self.config.fts.stride)
    }

    fn forecast(&self, w: &mut ArtifactWriter) -> covfda::Result<()> {
        let counts = self.counts()?;
        let mut f = fts_forecast(&counts, &self.config.fts.forecast, &self.config.intervals, 1)?;
        for v in [&mut f.counts, &mut f.lower, &mut f.upper] {
            v.truncate(self.horizon);
        }
        f.dates.truncate(self.horizon);
        output::write_forecast(w, &f, Some(&counts))?;
        let history = count_prefix(&counts, counts.len());
        match arima_baseline(&history, self.horizon, self.config.intervals.alpha) {
            Ok(b) => {
                let mut s = String::from("date,point,lower,upper\n");
                for (j, d) in f.dates.iter().enumerate() {
                    s.push_str(&format!("{d},{},{},{}\n", b.point[j], b.lower[j], b.upper[j]));
                }
                w.write("arima_forecast.csv", &s, &format!("ARIMA{} baseline", b.model.order))
            }
            Err(e) => {
                eprintln!("warning: ARIMA baseline skipped: {e}");
                Ok(())
            }
        }
    }

    fn backtest(&self, w: &mut ArtifactWriter) -> covfda::Result<()> {
        let counts = self.counts()?;
        let report = expanding_window(&counts, &self.config.backtest, &self.config.fts.forecast)?;
        for fold in report.folds.iter().filter(|f| !f.succeeded()) {
            eprintln!("warning: fold m={} failed: {}", fold.m, fold.failure.as_deref().unwrap_or(""));
        }
        output::write_backtest(w, &report, self.scale_plots)
    }

    fn report(&self, w: &mut ArtifactWriter) -> covfda::Result<()> {
        type Stage<'s, 'a> = fn(&'s Context<'a>, &mut ArtifactWriter) -> covfda::Result<()>;
        let stages: [(&str, Stage); 7] = [
            ("ingest", Context::ingest),
            ("fpca", Context::fpca),
            ("fcca", Context::fcca),
            ("cluster", Context::cluster_pair),
            ("fts", Context::fts),
            ("forecast", Context::forecast),
            ("backtest", Context::backtest),
        ];
        for (name, stage) in stages {
            let mut sub = w.scoped(name)?;
            stage(self, &mut sub)?;
            w.absorb(name, sub);
        }
        Ok(())
    }
}
