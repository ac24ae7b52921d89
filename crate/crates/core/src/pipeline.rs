//! Glue from raw case files to the datasets each analysis consumes.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcca::{fit_fcca, CcaConfig, CcaResult};
use crate::fclust::{cluster_features, em_fit, select_k_elbow, ClusterAssignment, ElbowResult, EmOptions, Features, MixtureModel};
use crate::fpca::{fit_pace, FpcaConfig, FpcaModel};
use crate::fts::{segment, RegularFts};
use crate::funcdata::{IrregularFunctionalDataset, SmootherConfig, Subject};
use crate::ingest::{load_nyt, load_populations, BUNDLED_POPULATIONS, national_totals, standardize, CaseRecord, DateWindow, RegionSeries};

#[derive(Debug, Clone)]
pub struct Inputs {
    pub records: Vec<CaseRecord>,
    pub populations: BTreeMap<String, f64>,
}

impl Inputs {
    pub fn load(cases: &Path, population: Option<&Path>) -> Result<Self> {
        let open = |p: &Path| {
            File::open(p).map_err(|e| Error::Format(format!("cannot open {}: {e}", p.display())))
        };
        let populations = match population {
            Some(p) => load_populations(open(p)?)?,
            None => load_populations(BUNDLED_POPULATIONS.as_bytes())?,
        };
        Ok(Self { records: load_nyt(open(cases)?)?, populations })
    }

    pub fn states(&self, window: DateWindow) -> Result<Vec<RegionSeries>> {
        standardize(&self.records, &self.populations, window)
    }

    /// National cumulative confirmed counts restricted to `window`.
    pub fn national(&self, window: DateWindow) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
        let rows: Vec<_> = national_totals(&self.records)?
            .into_iter()
            .filter(|(d, _, _)| *d >= window.start && *d <= window.end)
            .collect();
        if rows.is_empty() {
            return Err(Error::Data(format!("no national data inside {window}")));
        }
        Ok(rows.iter().map(|(d, c, _)| (*d, *c as f64)).unzip())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    DailyCases,
    CumulativeCases,
    CumulativeDeaths,
}

/// One subject per state with time measured in days from the window start.
pub fn region_dataset(series: &[RegionSeries], measure: Measure) -> Result<IrregularFunctionalDataset> {
    let days = series.first().map_or(0, RegionSeries::len);
    if days < 2 {
        return Err(Error::Data("window must span at least two days".into()));
    }
    let subjects = series
        .iter()
        .map(|s| {
            let values = match measure {
                Measure::DailyCases => s.daily.clone(),
                Measure::CumulativeCases => s.cumulative.clone(),
                Measure::CumulativeDeaths => s.cumulative_deaths.clone(),
            };
            Subject::new(s.region.clone(), (0..s.len()).map(|t| t as f64).collect(), values)
        })
        .collect();
    IrregularFunctionalDataset::new(subjects, (0.0, (days - 1) as f64))
}

pub fn run_fpca(
    inputs: &Inputs,
    window: DateWindow,
    sconf: &SmootherConfig,
    fconf: &FpcaConfig,
) -> Result<FpcaModel> {
    let data = region_dataset(&inputs.states(window)?, Measure::DailyCases)?;
    fit_pace(&data, sconf, fconf)
}

pub fn run_fcca(inputs: &Inputs, window: DateWindow, config: &CcaConfig) -> Result<CcaResult> {
    let series = inputs.states(window)?;
    let cases = region_dataset(&series, Measure::CumulativeCases)?;
    let deaths = region_dataset(&series, Measure::CumulativeDeaths)?;
    fit_fcca(&cases, &deaths, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// FVE threshold for the score features.
    pub fve: f64,
    pub k_max: usize,
    pub em: EmOptions,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { fve: 0.99, k_max: 10, em: EmOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterRun {
    pub features: Features,
    pub elbow: ElbowResult,
    pub model: MixtureModel,
    pub assignment: ClusterAssignment,
}

pub fn cluster_dataset(
    data: &IrregularFunctionalDataset,
    sconf: &SmootherConfig,
    config: &ClusterConfig,
) -> Result<ClusterRun> {
    let features = cluster_features(data, sconf, &FpcaConfig::with_fve(config.fve))?;
    let elbow = select_k_elbow(&features, config.k_max, &config.em)?;
    let k = elbow.k_star;
    let seed = config.em.seed.wrapping_add(k as u64);
    let model = em_fit(&features, k, &EmOptions { seed, ..config.em })?;
    let assignment = elbow.assignments[k - 1].clone();
    Ok(ClusterRun { features, elbow, model, assignment })
}

pub fn run_cluster(
    inputs: &Inputs,
    window: DateWindow,
    sconf: &SmootherConfig,
    config: &ClusterConfig,
) -> Result<ClusterRun> {
    let data = region_dataset(&inputs.states(window)?, Measure::CumulativeCases)?;
    cluster_dataset(&data, sconf, config)
}

/// Raw count curves of the national cumulative series inside `window`.
pub fn national_fts(inputs: &Inputs, window: DateWindow, segment_length: usize, stride: usize) -> Result<RegularFts> {
    let (dates, counts) = inputs.national(window)?;
    segment(&dates, &counts, segment_length, stride)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(region: &str, n: usize, scale: f64) -> RegionSeries {
        let start = NaiveDate::from_ymd_opt(2020, 4, 1).unwrap();
        let cumulative: Vec<f64> = (0..n).map(|i| scale * i as f64).collect();
        RegionSeries {
            region: region.into(),
            population: 1e6,
            dates: (0..n as u64).map(|i| start + chrono::Days::new(i)).collect(),
            daily: vec![scale; n],
            correction_flags: vec![false; n],
            cumulative_deaths: cumulative.iter().map(|c| c / 50.0).collect(),
            daily_deaths: vec![scale / 50.0; n],
            death_correction_flags: vec![false; n],
            cumulative,
        }
    }

    #[test]
    fn dataset_uses_day_offsets() {
        let s = vec![series("Ohio", 5, 2.0), series("Utah", 5, 3.0)];
        let d = region_dataset(&s, Measure::CumulativeDeaths).unwrap();
        assert_eq!(d.domain(), (0.0, 4.0));
        assert_eq!(d.subjects()[1].values[4], 12.0 / 50.0);
        assert_eq!(d.ids(), vec!["Ohio".to_string(), "Utah".to_string()]);
        assert!(region_dataset(&[series("Ohio", 1, 1.0)], Measure::DailyCases).is_err());
    }
}
