//! NYT-format case files, census populations and per-million standardization.

use std::collections::BTreeMap;
use std::io::Read;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NYT_HEADER: [&str; 5] = ["date", "state", "fips", "cases", "deaths"];
const POPULATION_HEADER: [&str; 2] = ["state", "population"];

/// The fifty states analyzed; the District of Columbia and territories are
/// excluded.
pub const CONTINENTAL_STATES: [&str; 50] = [
    "Alabama", "Alaska", "Arizona", "Arkansas", "California", "Colorado", "Connecticut",
    "Delaware", "Florida", "Georgia", "Hawaii", "Idaho", "Illinois", "Indiana", "Iowa", "Kansas",
    "Kentucky", "Louisiana", "Maine", "Maryland", "Massachusetts", "Michigan", "Minnesota",
    "Mississippi", "Missouri", "Montana", "Nebraska", "Nevada", "New Hampshire", "New Jersey",
    "New Mexico", "New York", "North Carolina", "North Dakota", "Ohio", "Oklahoma", "Oregon",
    "Pennsylvania", "Rhode Island", "South Carolina", "South Dakota", "Tennessee", "Texas", "Utah",
    "Vermont", "Virginia", "Washington", "West Virginia", "Wisconsin", "Wyoming",
];

pub fn is_continental_state(name: &str) -> bool {
    CONTINENTAL_STATES.contains(&name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub date: NaiveDate,
    pub region: String,
    pub fips: String,
    pub cumulative_confirmed: u64,
    pub cumulative_deaths: u64,
}

impl CaseRecord {
    pub fn is_continental_state(&self) -> bool {
        is_continental_state(&self.region)
    }
}

/// Inclusive calendar window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Format(format!("empty window {start}..{end}")));
        }
        Ok(Self { start, end })
    }

    pub fn days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }
}

impl FromStr for DateWindow {
    type Err = Error;

    /// Parses `YYYY-MM-DD:YYYY-MM-DD`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("window {s:?} is not START:END")))?;
        Self::new(parse_date(a.trim())?, parse_date(b.trim())?)
    }
}

impl std::fmt::Display for DateWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| Error::Format(format!("bad date {s:?}: {e}")))
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::Format(format!("unreadable header: {e}")))?;
    if header.is_empty() {
        return Err(Error::Format("missing header".into()));
    }
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Format(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn parse_count(field: &str, name: &str, line: u64) -> Result<u64> {
    let v: i64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Row { line, msg: format!("{name} {field:?} is not an integer") })?;
    if v < 0 {
        return Err(Error::Row { line, msg: format!("{name} is negative ({v})") });
    }
    Ok(v as u64)
}

/// Parses an NYT `date,state,fips,cases,deaths` file, preserving row order.
pub fn load_nyt<R: Read>(source: R) -> Result<Vec<CaseRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    check_header(&mut rdr, &NYT_HEADER)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Row { line, msg: e.to_string() }
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != 5 {
            return Err(Error::Row { line, msg: format!("expected 5 fields, found {}", row.len()) });
        }
        let date = NaiveDate::parse_from_str(row[0].trim(), "%Y-%m-%d")
            .map_err(|_| Error::Row { line, msg: format!("bad date {:?}", &row[0]) })?;
        out.push(CaseRecord {
            date,
            region: row[1].trim().to_string(),
            fips: row[2].trim().to_string(),
            cumulative_confirmed: parse_count(&row[3], "cases", line)?,
            cumulative_deaths: parse_count(&row[4], "deaths", line)?,
        });
    }
    Ok(out)
}

/// 2019 resident population estimates for the 50 states and DC.
pub const BUNDLED_POPULATIONS: &str = include_str!("../data/population_2019.csv");

/// Parses a `state,population` file.
pub fn load_populations<R: Read>(source: R) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    check_header(&mut rdr, &POPULATION_HEADER)?;
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let pop: f64 = row[1]
            .trim()
            .parse()
            .map_err(|_| Error::Row { line, msg: format!("bad population {:?}", &row[1]) })?;
        if !(pop > 0.0) {
            return Err(Error::Row { line, msg: "population must be positive".into() });
        }
        out.insert(row[0].trim().to_string(), pop);
    }
    Ok(out)
}

/// `count` per million persons.
pub fn per_million(count: f64, population: f64) -> f64 {
    count * 1e6 / population
}

/// One state's standardized series over the study window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSeries {
    pub region: String,
    pub population: f64,
    pub dates: Vec<NaiveDate>,
    /// Cumulative confirmed cases per million.
    pub cumulative: Vec<f64>,
    /// Daily new confirmed cases per million, clamped at zero.
    pub daily: Vec<f64>,
    /// True where a negative daily difference was clamped.
    pub correction_flags: Vec<bool>,
    pub cumulative_deaths: Vec<f64>,
    pub daily_deaths: Vec<f64>,
    pub death_correction_flags: Vec<bool>,
}

impl RegionSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// First differences with negative steps clamped to zero and flagged. The
/// first entry is measured against `before`.
fn clamped_daily(cum: &[f64], before: f64) -> (Vec<f64>, Vec<bool>) {
    let mut prev = before;
    cum.iter()
        .map(|&c| {
            let d = c - prev;
            prev = c;
            if d < 0.0 {
                (0.0, true)
            } else {
                (d, false)
            }
        })
        .unzip()
}

fn date_range(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let n = (end - start).num_days();
    (0..=n).map(|i| start + Duration::days(i)).collect()
}

/// Gap-filled daily cumulative (cases, deaths) per region from `first` to
/// `last`; zero before the first report, carried forward across gaps.
fn gap_filled(
    records: &[CaseRecord],
    keep: impl Fn(&CaseRecord) -> bool,
    first: NaiveDate,
    last: NaiveDate,
) -> BTreeMap<String, Vec<(u64, u64)>> {
    let mut by_region: BTreeMap<String, BTreeMap<NaiveDate, (u64, u64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| keep(r)) {
        by_region
            .entry(r.region.clone())
            .or_default()
            .insert(r.date, (r.cumulative_confirmed, r.cumulative_deaths));
    }
    let days = date_range(first, last);
    by_region
        .into_iter()
        .map(|(region, obs)| {
            let mut cur = (0, 0);
            let filled = days
                .iter()
                .map(|d| {
                    if let Some(&v) = obs.get(d) {
                        cur = v;
                    }
                    cur
                })
                .collect();
            (region, filled)
        })
        .collect()
}

fn data_span(records: &[CaseRecord]) -> Result<(NaiveDate, NaiveDate)> {
    let first = records.iter().map(|r| r.date).min();
    let last = records.iter().map(|r| r.date).max();
    first.zip(last).ok_or_else(|| Error::Format("no records".into()))
}

/// Standardizes the fifty states to per-million series restricted to
/// `window`. The window end is truncated to the last reported date.
pub fn standardize(
    records: &[CaseRecord],
    populations: &BTreeMap<String, f64>,
    window: DateWindow,
) -> Result<Vec<RegionSeries>> {
    let (data_first, data_last) = data_span(records)?;
    if window.start > data_last || window.end < data_first {
        return Err(Error::Format(format!(
            "window {window} contains no data (data span {data_first}..{data_last})"
        )));
    }
    let end = window.end.min(data_last);
    let first = data_first.min(window.start);

    let mut missing: Vec<String> = records
        .iter()
        .filter(|r| r.is_continental_state() && !populations.contains_key(&r.region))
        .map(|r| r.region.clone())
        .collect();
    missing.sort();
    missing.dedup();
    if !missing.is_empty() {
        return Err(Error::MissingPopulation(missing));
    }

    let filled = gap_filled(records, CaseRecord::is_continental_state, first, end);
    let offset = (window.start - first).num_days() as usize;
    let dates = date_range(window.start, end);
    let mut out = Vec::with_capacity(filled.len());
    for (region, series) in filled {
        let pop = populations[&region];
        let scale = |i: usize, deaths: bool| {
            let (c, d) = series[i];
            per_million(if deaths { d } else { c } as f64, pop)
        };
        let cases: Vec<f64> = (offset..series.len()).map(|i| scale(i, false)).collect();
        let deaths: Vec<f64> = (offset..series.len()).map(|i| scale(i, true)).collect();
        let (before_c, before_d) =
            if offset > 0 { (scale(offset - 1, false), scale(offset - 1, true)) } else { (0.0, 0.0) };
        let (daily, flags) = clamped_daily(&cases, before_c);
        let (daily_deaths, death_flags) = clamped_daily(&deaths, before_d);
        out.push(RegionSeries {
            region,
            population: pop,
            dates: dates.clone(),
            cumulative: cases,
            daily,
            correction_flags: flags,
            cumulative_deaths: deaths,
            daily_deaths,
            death_correction_flags: death_flags,
        });
    }
    Ok(out)
}

/// Nationwide daily cumulative totals summed over every entity in the file
/// (states, DC and territories), gap-filled per entity.
pub fn national_totals(records: &[CaseRecord]) -> Result<Vec<(NaiveDate, u64, u64)>> {
    let (first, last) = data_span(records)?;
    let filled = gap_filled(records, |_| true, first, last);
    let dates = date_range(first, last);
    Ok(dates
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let (c, k) = filled.values().fold((0, 0), |acc, s| (acc.0 + s[i].0, acc.1 + s[i].1));
            (d, c, k)
        })
        .collect())
}

/// CSV `region,date,cumulative_pm,daily_pm,correction_flag`.
pub fn series_to_csv(series: &[RegionSeries]) -> String {
    let mut out = String::from("region,date,cumulative_pm,daily_pm,correction_flag\n");
    for s in series {
        for i in 0..s.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.region, s.dates[i], s.cumulative[i], s.daily[i], s.correction_flags[i]
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    #[test]
    fn bundled_table_covers_every_state() {
        let pops = load_populations(BUNDLED_POPULATIONS.as_bytes()).unwrap();
        let states = pops.keys().filter(|s| is_continental_state(s)).count();
        assert_eq!(states, 50);
        assert_eq!(pops["California"], 39_512_223.0);
    }

    fn rec(date: &str, region: &str, cases: u64) -> CaseRecord {
        CaseRecord {
            date: d(date),
            region: region.into(),
            fips: String::new(),
            cumulative_confirmed: cases,
            cumulative_deaths: 0,
        }
    }

    #[test]
    fn parses_first_us_case() {
        let csv = "date,state,fips,cases,deaths\n2020-01-21,Washington,53,1,0\n";
        let recs = load_nyt(csv.as_bytes()).unwrap();
        assert_eq!(recs, vec![CaseRecord {
            date: d("2020-01-21"),
            region: "Washington".into(),
            fips: "53".into(),
            cumulative_confirmed: 1,
            cumulative_deaths: 0,
        }]);
    }

    #[test]
    fn empty_stream_is_format_error() {
        let err = load_nyt("".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn wrong_header_is_format_error() {
        let err = load_nyt("date,state,cases,deaths\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn negative_cases_name_the_line() {
        let csv = "date,state,fips,cases,deaths\n2020-03-01,Ohio,39,2,0\n2020-03-02,Ohio,39,-1,0\n";
        match load_nyt(csv.as_bytes()).unwrap_err() {
            Error::Row { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn territories_retained_and_taggable() {
        let csv = "date,state,fips,cases,deaths\n2020-03-01,Guam,66,1,0\n2020-03-01,Ohio,39,1,0\n";
        let recs = load_nyt(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(!recs[0].is_continental_state());
        assert!(recs[1].is_continental_state());
    }

    #[test]
    fn nationwide_per_million_arithmetic() {
        let pm = per_million(5_759_147.0, 328.24e6);
        assert!((pm - 17_545.0).abs() <= 1.0, "{pm}");
    }

    fn pops(p: f64) -> BTreeMap<String, f64> {
        [("Ohio".to_string(), p)].into_iter().collect()
    }

    #[test]
    fn daily_first_differences() {
        let recs: Vec<_> = [0, 1, 1, 3]
            .iter()
            .enumerate()
            .map(|(i, &c)| rec(&format!("2020-03-0{}", i + 1), "Ohio", c))
            .collect();
        let w = DateWindow::new(d("2020-03-01"), d("2020-03-04")).unwrap();
        let s = &standardize(&recs, &pops(1e6), w).unwrap()[0];
        assert_eq!(s.daily, vec![0.0, 1.0, 0.0, 2.0]);
        assert!(s.correction_flags.iter().all(|f| !f));
    }

    #[test]
    fn negative_difference_clamped_and_flagged() {
        let recs = vec![rec("2020-03-01", "Ohio", 5), rec("2020-03-02", "Ohio", 4)];
        let w = DateWindow::new(d("2020-03-01"), d("2020-03-02")).unwrap();
        let s = &standardize(&recs, &pops(1e6), w).unwrap()[0];
        assert_eq!(s.daily[1], 0.0);
        assert!(s.correction_flags[1]);
    }

    #[test]
    fn gaps_filled_and_pre_report_zero() {
        let recs = vec![rec("2020-03-03", "Ohio", 2), rec("2020-03-06", "Ohio", 7)];
        let w = DateWindow::new(d("2020-03-01"), d("2020-03-06")).unwrap();
        let s = &standardize(&recs, &pops(1e6), w).unwrap()[0];
        assert_eq!(s.cumulative, vec![0.0, 0.0, 2.0, 2.0, 2.0, 7.0]);
        assert_eq!(s.len(), 6);
    }

    #[test]
    fn missing_population_lists_regions() {
        let recs = vec![rec("2020-03-01", "Ohio", 1), rec("2020-03-01", "Texas", 1)];
        let w = DateWindow::new(d("2020-03-01"), d("2020-03-01")).unwrap();
        match standardize(&recs, &pops(1.0), w).unwrap_err() {
            Error::MissingPopulation(r) => assert_eq!(r, vec!["Texas".to_string()]),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn window_without_data_is_error() {
        let recs = vec![rec("2020-03-01", "Ohio", 1)];
        let w = DateWindow::new(d("2021-01-01"), d("2021-02-01")).unwrap();
        assert!(standardize(&recs, &pops(1.0), w).is_err());
    }

    #[test]
    fn territories_excluded_from_standardized_output() {
        let recs = vec![rec("2020-03-01", "Ohio", 1), rec("2020-03-01", "Puerto Rico", 3)];
        let w = DateWindow::new(d("2020-03-01"), d("2020-03-01")).unwrap();
        let s = standardize(&recs, &pops(1.0), w).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].region, "Ohio");
    }

    #[test]
    fn national_totals_include_all_entities() {
        let recs = vec![
            rec("2020-03-01", "Ohio", 1),
            rec("2020-03-01", "Guam", 2),
            rec("2020-03-02", "Ohio", 4),
        ];
        let t = national_totals(&recs).unwrap();
        assert_eq!(t.iter().map(|x| x.1).collect::<Vec<_>>(), vec![3, 6]);
    }

    #[test]
    fn window_parses() {
        let w: DateWindow = "2020-01-21:2020-08-15".parse().unwrap();
        assert_eq!(w.days(), 208);
        assert!("2020-01-21".parse::<DateWindow>().is_err());
    }

    proptest::proptest! {
        #[test]
        fn standardization_invariants(
            steps in proptest::collection::vec(-5i64..50, 3..40),
            pop in 1e3f64..1e8,
        ) {
            let mut c: i64 = 10;
            let recs: Vec<_> = steps.iter().enumerate().map(|(i, s)| {
                c = (c + s).max(0);
                let date = d("2020-03-01") + Duration::days(i as i64);
                CaseRecord { date, region: "Ohio".into(), fips: "39".into(),
                             cumulative_confirmed: c as u64, cumulative_deaths: 0 }
            }).collect();
            let w = DateWindow::new(recs[0].date, recs[recs.len() - 1].date).unwrap();
            let a = &standardize(&recs, &pops(pop), w).unwrap()[0];
            let b = &standardize(&recs, &pops(2.0 * pop), w).unwrap()[0];
            for i in 0..a.len() {
                proptest::prop_assert_eq!(a.cumulative[i] / 2.0, b.cumulative[i]);
                proptest::prop_assert_eq!(a.daily[i] / 2.0, b.daily[i]);
                proptest::prop_assert!(a.daily[i] >= 0.0);
            }
            let within: f64 = a.daily[1..].iter().sum();
            let net = a.cumulative[a.len() - 1] - a.cumulative[0];
            proptest::prop_assert!(within >= net - 1e-9 * net.abs().max(1.0));
            if !a.correction_flags[1..].iter().any(|&f| f) {
                proptest::prop_assert!((within - net).abs() <= 1e-9 * net.abs().max(1.0));
            }
            let again_window = DateWindow::new(a.dates[0], a.dates[a.len() - 1]).unwrap();
            let again = &standardize(&recs, &pops(pop), again_window).unwrap()[0];
            proptest::prop_assert_eq!(again, a);
        }
    }
}
