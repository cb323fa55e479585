//! Historical generation records and empirical models built from them.
//!
//! Input is UTF-8 CSV with a header row. The default columns are
//! `year,month,day,hour,output_mwh`; plain decimal numbers, no thousands
//! separators.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::{GenerationModel, PlottingPosition};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub year: i32,
    pub month: u32,
    pub day: u32,
    pub hour: u32,
    /// MWh
    pub output: f64,
}

/// Header names for each record field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub year: String,
    pub month: String,
    pub day: String,
    pub hour: String,
    pub output: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            year: "year".into(),
            month: "month".into(),
            day: "day".into(),
            hour: "hour".into(),
            output: "output_mwh".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseMode {
    /// Abort on the first malformed row.
    #[default]
    Strict,
    /// Skip malformed rows and report them.
    Lenient,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadedRecords {
    pub records: Vec<GenerationRecord>,
    /// `(line, reason)` of each skipped row in lenient mode.
    pub skipped: Vec<(u64, String)>,
}

/// Strict load with the default column mapping.
pub fn load_records(path: &Path) -> Result<Vec<GenerationRecord>> {
    Ok(load_records_with(path, &ColumnMapping::default(), ParseMode::Strict)?.records)
}

pub fn load_records_with(
    path: &Path,
    mapping: &ColumnMapping,
    mode: ParseMode,
) -> Result<LoadedRecords> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let malformed = |line: u64, message: String| Error::MalformedRecord {
        path: path.to_path_buf(),
        line,
        message,
    };

    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        log::warn!("{}: empty file, no records loaded", path.display());
        return Ok(LoadedRecords::default());
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| malformed(1, format!("missing column `{name}`")))
    };
    let idx = [
        column(&mapping.year)?,
        column(&mapping.month)?,
        column(&mapping.day)?,
        column(&mapping.hour)?,
        column(&mapping.output)?,
    ];

    let mut loaded = LoadedRecords::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row, &idx) {
            Ok(record) => loaded.records.push(record),
            Err(message) => match mode {
                ParseMode::Strict => return Err(malformed(line, message)),
                ParseMode::Lenient => loaded.skipped.push((line, message)),
            },
        }
    }
    if !loaded.skipped.is_empty() {
        log::warn!(
            "{}: skipped {} malformed rows",
            path.display(),
            loaded.skipped.len()
        );
    }
    if loaded.records.is_empty() && loaded.skipped.is_empty() {
        log::warn!("{}: no records", path.display());
    }
    Ok(loaded)
}

fn parse_row(
    row: &csv::StringRecord,
    idx: &[usize; 5],
) -> std::result::Result<GenerationRecord, String> {
    fn field<T: std::str::FromStr>(
        row: &csv::StringRecord,
        i: usize,
        name: &str,
    ) -> std::result::Result<T, String> {
        let raw = row
            .get(i)
            .ok_or_else(|| format!("missing field `{name}`"))?;
        raw.parse()
            .map_err(|_| format!("cannot parse {name} `{raw}`"))
    }
    let record = GenerationRecord {
        year: field(row, idx[0], "year")?,
        month: field(row, idx[1], "month")?,
        day: field(row, idx[2], "day")?,
        hour: field(row, idx[3], "hour")?,
        output: field(row, idx[4], "output")?,
    };
    validate(&record)?;
    Ok(record)
}

fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        4 | 6 | 9 | 11 => 30,
        2 if (year % 4 == 0 && year % 100 != 0) || year % 400 == 0 => 29,
        2 => 28,
        _ => 31,
    }
}

fn validate(r: &GenerationRecord) -> std::result::Result<(), String> {
    if !(1..=12).contains(&r.month) {
        return Err(format!("month {} outside 1-12", r.month));
    }
    if r.day < 1 || r.day > days_in_month(r.year, r.month) {
        return Err(format!(
            "day {} invalid for {}-{:02}",
            r.day, r.year, r.month
        ));
    }
    if r.hour > 23 {
        return Err(format!("hour {} outside 0-23", r.hour));
    }
    if !(r.output.is_finite() && r.output >= 0.0) {
        return Err(format!(
            "output {} must be finite and non-negative",
            r.output
        ));
    }
    Ok(())
}

/// Empirical model of the `(month, hour)` slice, outputs multiplied by `scale`.
pub fn build_empirical_model(
    records: &[GenerationRecord],
    month: u32,
    hour: u32,
    scale: f64,
    plotting: PlottingPosition,
) -> Result<GenerationModel> {
    if !(1..=12).contains(&month) || hour > 23 {
        return Err(Error::Domain(format!(
            "month {month} / hour {hour} out of range"
        )));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Domain(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let samples: Vec<f64> = records
        .iter()
        .filter(|r| r.month == month && r.hour == hour)
        .map(|r| r.output)
        .collect();
    if samples.len() < 2 {
        return Err(Error::InsufficientData {
            month,
            hour,
            found: samples.len(),
        });
    }
    GenerationModel::empirical(&samples, plotting)?.scaled(scale)
}
