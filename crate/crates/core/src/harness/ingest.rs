//! Turns raw repeated observations into daily intervals and fixed-length windows.
//!
//! Input rows are `sample_id,day,dim,value` with ISO dates. For each source the
//! daily interval is `[min, max]` of that day's values. Runs of consecutive days
//! are cut into non-overlapping windows of `window_days`; a missing day (or a day
//! lacking some dimension) ends the run and any partial window is dropped. Each
//! window becomes one sample labeled by its source, sources numbered in sorted order.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::NaiveDate;
use serde::Deserialize;

use crate::dgp::{LabeledDataset, Samples};
use crate::error::{Error, Result};
use crate::interval::{IntervalSeries, MvIntervalSeries};

#[derive(Debug, Deserialize)]
struct RawRow {
    sample_id: String,
    day: String,
    dim: usize,
    value: f64,
}

type Daily = BTreeMap<NaiveDate, BTreeMap<usize, (f64, f64)>>;

pub fn ingest_raw<R: Read>(input: R, window_days: usize) -> Result<LabeledDataset> {
    if window_days < 2 {
        return Err(Error::InvalidConfig("window_days must be >= 2".into()));
    }
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let mut sources: BTreeMap<String, Daily> = BTreeMap::new();
    let mut all_dims = std::collections::BTreeSet::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let malformed = |message: String| Error::MalformedRow { row: line, message };
        let row: RawRow = record.deserialize(Some(&headers)).map_err(|e| malformed(e.to_string()))?;
        let day = NaiveDate::parse_from_str(row.day.trim(), "%Y-%m-%d")
            .map_err(|e| malformed(format!("bad day {:?}: {e}", row.day)))?;
        if !row.value.is_finite() {
            return Err(malformed(format!("non-finite value {}", row.value)));
        }
        all_dims.insert(row.dim);
        let slot = sources
            .entry(row.sample_id)
            .or_default()
            .entry(day)
            .or_default()
            .entry(row.dim)
            .or_insert((row.value, row.value));
        slot.0 = slot.0.min(row.value);
        slot.1 = slot.1.max(row.value);
    }
    if sources.is_empty() {
        return Err(Error::InvalidConfig("no observations".into()));
    }
    let dims: Vec<usize> = all_dims.into_iter().collect();
    let mut windows: Vec<(usize, Vec<IntervalSeries>)> = Vec::new();
    for (label, daily) in sources.values().enumerate() {
        let mut run: Vec<&BTreeMap<usize, (f64, f64)>> = Vec::new();
        let mut prev: Option<NaiveDate> = None;
        for (&day, obs) in daily {
            let complete = dims.iter().all(|d| obs.contains_key(d));
            let consecutive = prev.is_some_and(|p| p.succ_opt() == Some(day));
            if !complete || !consecutive {
                run.clear();
            }
            prev = complete.then_some(day);
            if complete {
                run.push(obs);
            }
            if run.len() == window_days {
                let series = dims
                    .iter()
                    .map(|d| {
                        let (lower, upper) = run.iter().map(|o| o[d]).unzip();
                        IntervalSeries::new(lower, upper, Some(label))
                    })
                    .collect::<Result<Vec<_>>>()?;
                windows.push((label, series));
                run.clear();
            }
        }
    }
    let names: Vec<String> = sources.into_keys().collect();
    let samples = if dims.len() == 1 {
        Samples::Univariate(windows.into_iter().map(|(_, mut s)| s.remove(0)).collect())
    } else {
        Samples::Multivariate(
            windows
                .into_iter()
                .map(|(label, s)| MvIntervalSeries::from_dims(s, Some(label)))
                .collect::<Result<_>>()?,
        )
    };
    LabeledDataset::new(samples, names.len(), names)
}
