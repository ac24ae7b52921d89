//! Run configuration, read from a TOML file with one section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::BacktestSpec;
use crate::fcca::CcaConfig;
use crate::forecast::{FtsForecastConfig, IntervalConfig};
use crate::fpca::FpcaConfig;
use crate::funcdata::SmootherConfig;
use crate::ingest::DateWindow;
use crate::pipeline::ClusterConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    pub cases: Option<PathBuf>,
    /// Falls back to the bundled 2019 estimates when unset.
    pub population: Option<PathBuf>,
}

/// Study windows as `START:END` strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Windows {
    pub ingest: String,
    pub fpca: String,
    pub fcca: String,
    pub cluster: String,
    pub cluster_truncated: String,
    pub fts: String,
}

impl Default for Windows {
    fn default() -> Self {
        Self {
            ingest: "2020-01-21:2020-09-07".into(),
            fpca: "2020-01-21:2020-08-15".into(),
            fcca: "2020-04-01:2020-08-15".into(),
            cluster: "2020-04-01:2020-08-15".into(),
            cluster_truncated: "2020-04-01:2020-05-15".into(),
            fts: "2020-04-04:2020-08-25".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FtsSection {
    pub segment_length: usize,
    pub stride: usize,
    pub forecast: FtsForecastConfig,
}

impl Default for FtsSection {
    fn default() -> Self {
        Self { segment_length: 14, stride: 13, forecast: FtsForecastConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub data: DataPaths,
    pub windows: Windows,
    pub smoother: SmootherConfig,
    pub fpca: FpcaConfig,
    pub fcca: CcaConfig,
    pub cluster: ClusterConfig,
    pub fts: FtsSection,
    pub intervals: IntervalConfig,
    pub backtest: BacktestSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: crate::DEFAULT_SEED,
            out: None,
            data: DataPaths::default(),
            windows: Windows::default(),
            smoother: SmootherConfig::default(),
            fpca: FpcaConfig::default(),
            fcca: CcaConfig::default(),
            cluster: ClusterConfig::default(),
            fts: FtsSection::default(),
            intervals: IntervalConfig::default(),
            backtest: BacktestSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Pushes the run seed into every stochastic stage.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.cluster.em.seed = seed;
        self.intervals.seed = seed;
        self.backtest.seed = seed;
    }

    pub fn apply_alpha(&mut self, alpha: f64) {
        self.intervals.alpha = alpha;
        self.backtest.alpha = alpha;
    }

    pub fn validate(&self) -> Result<()> {
        self.smoother.validate()?;
        self.fpca.validate()?;
        self.fcca.validate()?;
        self.fts.forecast.lrc.validate()?;
        for w in [
            &self.windows.ingest,
            &self.windows.fpca,
            &self.windows.fcca,
            &self.windows.cluster,
            &self.windows.cluster_truncated,
            &self.windows.fts,
        ] {
            parse_window(w)?;
        }
        Ok(())
    }
}

pub fn parse_window(s: &str) -> Result<DateWindow> {
    s.parse::<DateWindow>().map_err(|e| Error::Config(e.to_string()))
}
