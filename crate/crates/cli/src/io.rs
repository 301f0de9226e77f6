//! CSV batches and simulation tables.
//!
//! Batch schema: a header row with feature columns `x0..x{d-1}` (any order),
//! the sensitive attribute `s` and optionally the label `y`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use frem_core::simulation::SimulationRow;
use frem_core::{Matrix, SampleBatch};

use crate::error::{CliError, CliResult};

enum Column {
    Feature(usize),
    Sensitive,
    Label,
}

fn parse_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::MissingInput {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn classify_header(path: &Path, headers: &csv::StringRecord) -> CliResult<(Vec<Column>, usize, bool)> {
    let mut columns = Vec::with_capacity(headers.len());
    let mut features = Vec::new();
    let (mut has_s, mut has_y) = (false, false);
    for (idx, name) in headers.iter().enumerate() {
        let name = name.trim();
        let column = match name {
            "s" if !has_s => {
                has_s = true;
                Column::Sensitive
            }
            "y" if !has_y => {
                has_y = true;
                Column::Label
            }
            _ => match name.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()) {
                Some(k) if !features.contains(&k) => {
                    features.push(k);
                    Column::Feature(k)
                }
                _ => {
                    return Err(parse_error(
                        path,
                        format!("header column {} `{name}` is not x<k>, s or y (or is repeated)", idx + 1),
                    ))
                }
            },
        };
        columns.push(column);
    }
    if !has_s {
        return Err(parse_error(path, "missing sensitive attribute column `s`"));
    }
    let d = features.len();
    if let Some(k) = (0..d).find(|k| !features.contains(k)) {
        return Err(parse_error(path, format!("feature columns must be x0..x{}; x{k} is missing", d.saturating_sub(1))));
    }
    Ok((columns, d, has_y))
}

/// Reads a batch, preserving row order.
pub fn read_batch(path: &Path) -> CliResult<SampleBatch> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(open(path)?);
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, format!("cannot read header: {e}")))?
        .clone();
    let (columns, d, has_y) = classify_header(path, &headers)?;
    let mut x = Vec::new();
    let mut s = Vec::new();
    let mut y = Vec::new();
    let mut row = vec![0.0; d];
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(path, format!("data row {}: {e}", r + 1)))?;
        for (c, (cell, column)) in record.iter().zip(&columns).enumerate() {
            let value: f64 = cell.trim().parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                parse_error(
                    path,
                    format!("data row {}, column {} (`{}`): `{cell}` is not a finite number", r + 1, c + 1, &headers[c]),
                )
            })?;
            match column {
                Column::Feature(k) => row[*k] = value,
                Column::Sensitive => s.push(value),
                Column::Label => y.push(value),
            }
        }
        x.extend_from_slice(&row);
    }
    let n = s.len();
    let x = Matrix::from_vec(n, d, x)?;
    Ok(SampleBatch::new(x, s, has_y.then_some(y))?)
}

/// Writes a batch with 17 significant digits per value, so reading it back
/// reproduces every value exactly.
pub fn write_batch(path: &Path, batch: &SampleBatch) -> CliResult<()> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(|e| io_err(e.into()))?;
    let mut header: Vec<String> = (0..batch.d()).map(|k| format!("x{k}")).collect();
    header.push("s".into());
    if batch.y().is_some() {
        header.push("y".into());
    }
    writer.write_record(&header).map_err(|e| io_err(e.into()))?;
    for i in 0..batch.n() {
        let mut record: Vec<String> = batch.x().row(i).iter().map(|v| format!("{v:.16e}")).collect();
        record.push(format!("{:.16e}", batch.s()[i]));
        if let Some(y) = batch.y() {
            record.push(format!("{:.16e}", y[i]));
        }
        writer.write_record(&record).map_err(|e| io_err(e.into()))?;
    }
    writer.flush().map_err(io_err)
}

pub const SIMULATION_HEADER: [&str; 9] = ["design", "estimator", "param", "n", "m", "reps", "bias", "mae", "rmse"];

pub fn write_simulation_rows<W: Write>(out: W, rows: &[SimulationRow]) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(SIMULATION_HEADER)?;
    for r in rows {
        writer.write_record([
            r.design.clone(),
            r.estimator.clone(),
            r.param.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            r.reps.to_string(),
            r.bias.to_string(),
            r.mae.to_string(),
            r.rmse.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Parses a table written by [`write_simulation_rows`].
pub fn read_simulation_rows(path: &Path) -> CliResult<Vec<SimulationRow>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, e.to_string()))?
        .clone();
    if headers.iter().ne(SIMULATION_HEADER) {
        return Err(parse_error(path, "unexpected simulation table header"));
    }
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(path, format!("row {}: {e}", r + 1)))?;
        let num = |c: usize| -> CliResult<f64> {
            record[c]
                .parse()
                .map_err(|_| parse_error(path, format!("row {}, column {}: not a number", r + 1, SIMULATION_HEADER[c])))
        };
        let count = |c: usize| -> CliResult<usize> {
            record[c]
                .parse()
                .map_err(|_| parse_error(path, format!("row {}, column {}: not a count", r + 1, SIMULATION_HEADER[c])))
        };
        rows.push(SimulationRow {
            design: record[0].to_string(),
            estimator: record[1].to_string(),
            param: num(2)?,
            n: count(3)?,
            m: count(4)?,
            reps: count(5)?,
            bias: num(6)?,
            mae: num(7)?,
            rmse: num(8)?,
        });
    }
    Ok(rows)
}
