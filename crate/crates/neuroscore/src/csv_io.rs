//! CSV tables: stimulus features, per-trial P300 estimates, loss histories
//! and image rankings.
//!
//! Every file is UTF-8 with a header row and LF line endings. Floating-point
//! cells are written as the shortest decimal that round-trips the value's
//! `f32` rounding.

use std::fs::File;
use std::path::Path;

use neuroscore_core::linalg::Matrix;
use neuroscore_core::net::TrainHistory;

use crate::error::{Error, Result};

pub const CATEGORY_COLUMN: &str = "category";

pub(crate) fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::format(path, format!("{kind:?}")),
    }
}

pub(crate) fn float(v: f64) -> String {
    (v as f32).to_string()
}

fn parse_float(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64> {
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::format(path, format!("line {line}, column {column}: {cell:?} is not a finite number"))),
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// A feature matrix with optional per-row categories.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub features: Matrix,
    pub categories: Option<Vec<String>>,
}

/// Header `f0,f1,...`, plus a trailing `category` column when labels are
/// given.
pub fn write_features(path: &Path, features: &Matrix, categories: Option<&[String]>) -> Result<()> {
    if let Some(c) = categories {
        if c.len() != features.rows() {
            return Err(Error::Config(format!(
                "{} category labels for {} feature rows",
                c.len(),
                features.rows()
            )));
        }
    }
    let mut w = writer(path)?;
    let mut header: Vec<String> = (0..features.cols()).map(|j| format!("f{j}")).collect();
    if categories.is_some() {
        header.push(CATEGORY_COLUMN.into());
    }
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..features.rows() {
        let mut row: Vec<String> = features.row(i).iter().map(|&v| float(v)).collect();
        if let Some(c) = categories {
            row.push(c[i].clone());
        }
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let mut r = reader(path)?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut names: Vec<&str> = header.iter().collect();
    let has_category = names.last() == Some(&CATEGORY_COLUMN);
    if has_category {
        names.pop();
    }
    if names.is_empty() {
        return Err(Error::format(path, "no feature columns"));
    }
    if let Some((j, name)) = names.iter().enumerate().find(|(j, n)| **n != format!("f{j}")) {
        return Err(Error::format(path, format!("column {j} is {name:?}, expected \"f{j}\"")));
    }
    let d = names.len();
    let mut data = Vec::new();
    let mut categories = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record);
        for (j, cell) in record.iter().take(d).enumerate() {
            data.push(parse_float(path, line, &header[j], cell)?);
        }
        if has_category {
            categories.push(record[d].to_string());
        }
    }
    let rows = data.len() / d;
    if rows == 0 {
        return Err(Error::format(path, "no data rows"));
    }
    Ok(FeatureTable {
        features: Matrix::from_vec(rows, d, data).map_err(|e| Error::format(path, e.to_string()))?,
        categories: has_category.then_some(categories),
    })
}

/// Single-trial P300 estimates: amplitude and optionally the source
/// waveform over the signal window.
#[derive(Debug, Clone, PartialEq)]
pub struct P300Table {
    /// Index of each row's trial in the original bundle (and feature file),
    /// strictly increasing; trials removed by rejection are absent.
    pub trials: Vec<usize>,
    pub amplitudes: Vec<f64>,
    pub categories: Vec<String>,
    pub signals: Option<Matrix>,
}

/// Header `trial,category,amplitude` followed by `s0,s1,...` when signals
/// are present.
pub fn write_p300(path: &Path, table: &P300Table) -> Result<()> {
    let n = table.amplitudes.len();
    if table.trials.len() != n
        || table.categories.len() != n
        || table.signals.as_ref().is_some_and(|s| s.rows() != n)
    {
        return Err(Error::Config("P300 table columns differ in length".into()));
    }
    let mut w = writer(path)?;
    let mut header = vec!["trial".to_string(), CATEGORY_COLUMN.into(), "amplitude".into()];
    if let Some(s) = &table.signals {
        header.extend((0..s.cols()).map(|j| format!("s{j}")));
    }
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..n {
        let mut row = vec![table.trials[i].to_string(), table.categories[i].clone(), float(table.amplitudes[i])];
        if let Some(s) = &table.signals {
            row.extend(s.row(i).iter().map(|&v| float(v)));
        }
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_p300(path: &Path) -> Result<P300Table> {
    let mut r = reader(path)?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 3 || names[..3] != ["trial", CATEGORY_COLUMN, "amplitude"] {
        return Err(Error::format(path, "header must start with trial,category,amplitude"));
    }
    if let Some((j, name)) = names[3..].iter().enumerate().find(|(j, n)| **n != format!("s{j}")) {
        return Err(Error::format(path, format!("signal column {j} is {name:?}, expected \"s{j}\"")));
    }
    let k = names.len() - 3;
    let (mut trials, mut amplitudes, mut categories, mut signals) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for record in r.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record);
        match record[0].trim().parse::<usize>() {
            Ok(t) if trials.last().is_none_or(|&prev| t > prev) => trials.push(t),
            _ => {
                return Err(Error::format(
                    path,
                    format!("line {line}: trial {:?} is not an index above the previous row's", &record[0]),
                ))
            }
        }
        categories.push(record[1].to_string());
        amplitudes.push(parse_float(path, line, "amplitude", &record[2])?);
        for (j, cell) in record.iter().skip(3).enumerate() {
            signals.push(parse_float(path, line, &header[3 + j], cell)?);
        }
    }
    if amplitudes.is_empty() {
        return Err(Error::format(path, "no data rows"));
    }
    let signals = if k == 0 {
        None
    } else {
        Some(Matrix::from_vec(amplitudes.len(), k, signals).map_err(|e| Error::format(path, e.to_string()))?)
    };
    Ok(P300Table { trials, amplitudes, categories, signals })
}

/// Header `epoch,stage1_loss,stage2_loss`; a stage that did not run leaves
/// its cells empty.
pub fn write_losses(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["epoch", "stage1_loss", "stage2_loss"]).map_err(|e| csv_error(path, e))?;
    let cell = |h: &[f64], i: usize| h.get(i).map(|&v| float(v)).unwrap_or_default();
    for i in 0..history.stage1.len().max(history.stage2.len()) {
        w.write_record([(i + 1).to_string(), cell(&history.stage1, i), cell(&history.stage2, i)])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header `rank,image,score` plus `category` when labels are given; rank 1
/// is the highest predicted amplitude.
pub fn write_ranking(path: &Path, ranking: &[(usize, f64)], categories: Option<&[String]>) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["rank", "image", "score"];
    if categories.is_some() {
        header.push(CATEGORY_COLUMN);
    }
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (rank, &(image, score)) in ranking.iter().enumerate() {
        let mut row = vec![(rank + 1).to_string(), image.to_string(), float(score)];
        if let Some(c) = categories {
            row.push(c[image].clone());
        }
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
