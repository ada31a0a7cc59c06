//! CSV ingestion and emission. Time-series files carry an ISO-8601 date in
//! the first column and one column per asset; all numeric output is written
//! with 17 significant digits so golden files stay meaningful.

use std::path::Path;

use chrono::{Duration, NaiveDate};
use nalgebra::DMatrix;
use qfkernels::timeseries::TimeSeriesMatrix;

use crate::error::{data_err, CliError, Result};

/// 17 significant digits: round-trips every f64 exactly.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| CliError::Data(format!("bad date {s:?}: {e}")))
}

/// Consecutive calendar dates following `after` (exclusive).
pub fn dates_after(after: NaiveDate, n: usize) -> Vec<NaiveDate> {
    (1..=n as i64).map(|k| after + Duration::days(k)).collect()
}

pub struct TimeSeriesCsv {
    pub series: TimeSeriesMatrix,
    pub assets: Vec<String>,
    pub dates: Vec<NaiveDate>,
}

/// Reads a time-series CSV: header `date,<asset>,...`, one row per date.
pub fn read_timeseries(path: &Path) -> Result<TimeSeriesCsv> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(data_err)?.clone();
    if headers.len() < 2 {
        return Err(CliError::Data(format!(
            "{}: expected a date column plus at least one asset column",
            path.display()
        )));
    }
    let assets: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();

    let mut dates = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ri, record) in reader.records().enumerate() {
        let record = record.map_err(data_err)?;
        if record.len() != headers.len() {
            return Err(CliError::Data(format!(
                "{} row {}: {} fields, header has {}",
                path.display(),
                ri + 2,
                record.len(),
                headers.len()
            )));
        }
        dates.push(parse_date(&record[0])?);
        let mut row = Vec::with_capacity(assets.len());
        for (ci, field) in record.iter().enumerate().skip(1) {
            let v: f64 = field.trim().parse().map_err(|e| {
                CliError::Data(format!(
                    "{} row {} column {} ({:?}): {e}",
                    path.display(),
                    ri + 2,
                    ci + 1,
                    field
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }

    let (t, d) = (rows.len(), assets.len());
    let values = DMatrix::from_fn(d, t, |j, k| rows[k][j]);
    let series = TimeSeriesMatrix::from_values(values)
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(TimeSeriesCsv {
        series,
        assets,
        dates,
    })
}

/// Writes a time-series CSV in the same layout `read_timeseries` consumes.
pub fn write_timeseries(
    path: &Path,
    values: &DMatrix<f64>,
    assets: &[String],
    dates: &[NaiveDate],
) -> Result<()> {
    assert_eq!(values.nrows(), assets.len());
    assert_eq!(values.ncols(), dates.len());
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut header = vec!["date".to_owned()];
    header.extend_from_slice(assets);
    writer.write_record(&header).map_err(data_err)?;
    for (k, date) in dates.iter().enumerate() {
        let mut row = vec![date.format("%Y-%m-%d").to_string()];
        row.extend((0..assets.len()).map(|j| fmt_full(values[(j, k)])));
        writer.write_record(&row).map_err(data_err)?;
    }
    writer.flush().map_err(data_err)?;
    Ok(())
}

/// Writes a plain numeric table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    writer.write_record(header).map_err(data_err)?;
    for row in rows {
        writer.write_record(row).map_err(data_err)?;
    }
    writer.flush().map_err(data_err)?;
    Ok(())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(data_err)?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn default_asset_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("asset_{j}")).collect()
}
