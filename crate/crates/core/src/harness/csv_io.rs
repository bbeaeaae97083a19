//! Interval CSV: `sample_id,t,dim,lower,upper,label`, one row per observation.
//!
//! A file whose rows all have `dim == 0` reads back as univariate data.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::dgp::{LabeledDataset, Samples};
use crate::error::{Error, Result};
use crate::interval::{IntervalSeries, MvIntervalSeries};

pub const HEADER: [&str; 6] = ["sample_id", "t", "dim", "lower", "upper", "label"];

#[derive(Debug, Deserialize)]
struct Row {
    sample_id: String,
    t: usize,
    dim: usize,
    lower: f64,
    upper: f64,
    label: usize,
}

pub fn sample_id(i: usize) -> String {
    format!("s{i:05}")
}

pub fn write_dataset<W: Write>(data: &LabeledDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    let mut row = |id: &str, t: usize, dim: usize, l: f64, u: f64, label: usize| {
        w.write_record([
            id.to_string(),
            t.to_string(),
            dim.to_string(),
            l.to_string(),
            u.to_string(),
            label.to_string(),
        ])
    };
    match &data.samples {
        Samples::Univariate(s) => {
            for (i, series) in s.iter().enumerate() {
                let id = sample_id(i);
                let label = series.label().unwrap_or(0);
                for t in 0..series.len() {
                    row(&id, t, 0, series.lower()[t], series.upper()[t], label)?;
                }
            }
        }
        Samples::Multivariate(s) => {
            for (i, series) in s.iter().enumerate() {
                let id = sample_id(i);
                let label = series.label().unwrap_or(0);
                for d in 0..series.dims() {
                    for t in 0..series.len() {
                        row(&id, t, d, series.lower()[d][t], series.upper()[d][t], label)?;
                    }
                }
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_dataset_file(data: &LabeledDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(data, std::io::BufWriter::new(file))
}

#[derive(Default)]
struct Accum {
    label: usize,
    /// `dims[d][t] = Some((lower, upper))`
    dims: Vec<Vec<Option<(f64, f64)>>>,
}

/// Reads an interval CSV. Samples keep the order of their first row; the class
/// count is one more than the largest label.
pub fn read_dataset<R: Read>(input: R) -> Result<LabeledDataset> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(HEADER) {
        return Err(Error::MalformedRow {
            row: 1,
            message: format!("header must be {}", HEADER.join(",")),
        });
    }
    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut samples: Vec<Accum> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row: Row = record.deserialize(Some(&headers)).map_err(|e| Error::MalformedRow {
            row: line,
            message: e.to_string(),
        })?;
        if !(row.lower <= row.upper) {
            return Err(Error::MalformedRow {
                row: line,
                message: format!("lower {} > upper {}", row.lower, row.upper),
            });
        }
        let i = *index.entry(row.sample_id.clone()).or_insert_with(|| {
            order.push(row.sample_id.clone());
            samples.push(Accum {
                label: row.label,
                dims: Vec::new(),
            });
            samples.len() - 1
        });
        let acc = &mut samples[i];
        let bad = |message: String| Error::MalformedRow { row: line, message };
        if acc.label != row.label {
            return Err(bad(format!("sample {} has labels {} and {}", row.sample_id, acc.label, row.label)));
        }
        if acc.dims.len() <= row.dim {
            acc.dims.resize(row.dim + 1, Vec::new());
        }
        let series = &mut acc.dims[row.dim];
        if series.len() <= row.t {
            series.resize(row.t + 1, None);
        }
        if series[row.t].replace((row.lower, row.upper)).is_some() {
            return Err(bad(format!(
                "sample {} has two rows for t={} dim={}",
                row.sample_id, row.t, row.dim
            )));
        }
    }
    if samples.is_empty() {
        return Err(Error::InvalidConfig("interval CSV has no rows".into()));
    }
    let dims = samples.iter().map(|s| s.dims.len()).max().unwrap_or(0);
    let mut built = Vec::with_capacity(samples.len());
    for (id, acc) in order.iter().zip(samples) {
        if acc.dims.len() != dims {
            return Err(Error::InvalidConfig(format!(
                "sample {id} has {} dimensions, expected {dims}",
                acc.dims.len()
            )));
        }
        let mut series = Vec::with_capacity(dims);
        for (d, points) in acc.dims.into_iter().enumerate() {
            let (lower, upper): (Vec<f64>, Vec<f64>) = points
                .into_iter()
                .enumerate()
                .map(|(t, p)| {
                    p.ok_or_else(|| Error::InvalidConfig(format!("sample {id} dim {d} is missing t={t}")))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            series.push(IntervalSeries::new(lower, upper, Some(acc.label))?);
        }
        built.push((acc.label, series));
    }
    let classes = built.iter().map(|(l, _)| l + 1).max().unwrap_or(0);
    let samples = if dims == 1 {
        Samples::Univariate(built.into_iter().map(|(_, mut s)| s.remove(0)).collect())
    } else {
        Samples::Multivariate(
            built
                .into_iter()
                .map(|(label, s)| MvIntervalSeries::from_dims(s, Some(label)))
                .collect::<Result<_>>()?,
        )
    };
    LabeledDataset::new(samples, classes, (0..classes).map(|k| k.to_string()).collect())
}

pub fn read_dataset_file(path: &Path) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(std::io::BufReader::new(file))
}
