//! CSV reading and writing.
//!
//! Numbers are printed with 12 significant digits, switching to exponent
//! notation outside `[1e-5, 1e12)`, so every emitted file parses back to the
//! printed values.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use blk_survival::{Dataset, Status, SurvivalRecord};
use csv::{ReaderBuilder, StringRecord, Writer};

use crate::error::{CliError, CliResult};

const SIGNIFICANT: usize = 12;

/// `%g`-style formatting with [`SIGNIFICANT`] digits.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT - 1, x);
    let (mantissa, exponent) = sci.split_once('e').expect("exponent marker");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    if (-5..SIGNIFICANT as i32).contains(&exponent) {
        let decimals = (SIGNIFICANT as i32 - 1 - exponent).max(0) as usize;
        trim_fraction(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_fraction(mantissa.to_string()), exponent)
    }
}

fn trim_fraction(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Parses a number written by [`format_number`] (or any float literal).
pub fn parse_number(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

/// Destination for a CSV table: a file, or stdout when no path is given.
pub enum Sink {
    File(PathBuf, Writer<File>),
    Stdout(Writer<io::Stdout>),
}

impl Sink {
    pub fn open(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => {
                let file = File::create(p).map_err(|source| CliError::Write {
                    path: p.to_path_buf(),
                    source,
                })?;
                Ok(Sink::File(p.to_path_buf(), Writer::from_writer(file)))
            }
            None => Ok(Sink::Stdout(Writer::from_writer(io::stdout()))),
        }
    }

    pub fn row<I, S>(&mut self, fields: I) -> CliResult<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let result = match self {
            Sink::File(_, w) => w.write_record(fields),
            Sink::Stdout(w) => w.write_record(fields),
        };
        result.map_err(|e| self.error(io::Error::other(e)))
    }

    pub fn finish(mut self) -> CliResult<()> {
        let result = match &mut self {
            Sink::File(_, w) => w.flush(),
            Sink::Stdout(w) => w.flush(),
        };
        result.map_err(|e| self.error(e))
    }

    fn error(&self, source: io::Error) -> CliError {
        let path = match self {
            Sink::File(p, _) => p.clone(),
            Sink::Stdout(_) => PathBuf::from("<stdout>"),
        };
        CliError::Write { path, source }
    }
}

/// Reads `id,time,status,<covariates…>`; status is 1 for a death and 0 for
/// a censored time. Empty cells are rejected.
pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let file = File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader.headers().map_err(|e| row_error(path, 1, e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "time" || &header[2] != "status" {
        return Err(row_error(path, 1, "header must start with id,time,status".into()));
    }
    let names: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let mut records = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let line = k as u64 + 2;
        let row = row.map_err(|e| {
            let line = e.position().map_or(line, |p| p.line());
            row_error(path, line, e.to_string())
        })?;
        let line = row.position().map_or(line, |p| p.line());
        records.push(parse_record(&row, names.len()).map_err(|m| row_error(path, line, m))?);
    }
    Dataset::new(names, records).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn parse_record(row: &StringRecord, q: usize) -> Result<SurvivalRecord, String> {
    if row.len() != q + 3 {
        return Err(format!("expected {} fields, found {}", q + 3, row.len()));
    }
    if let Some(pos) = row.iter().position(str::is_empty) {
        return Err(format!("field {} is empty", pos + 1));
    }
    let num = |i: usize, what: &str| -> Result<f64, String> {
        row[i]
            .parse::<f64>()
            .map_err(|_| format!("{what} `{}` is not a number", &row[i]))
    };
    let time = num(1, "time")?;
    let status = match &row[2] {
        "1" => Status::Death,
        "0" => Status::Censored,
        other => return Err(format!("status must be 0 or 1, got `{other}`")),
    };
    let covariates = (0..q)
        .map(|k| num(3 + k, "covariate"))
        .collect::<Result<Vec<_>, _>>()?;
    SurvivalRecord::new(&row[0], time, status, covariates).map_err(|e| e.to_string())
}

fn row_error(path: &Path, line: u64, message: String) -> CliError {
    CliError::Row {
        path: path.to_path_buf(),
        line,
        message,
    }
}

pub fn write_dataset(path: Option<&Path>, dataset: &Dataset) -> CliResult<()> {
    let mut sink = Sink::open(path)?;
    let header: Vec<String> = ["id", "time", "status"]
        .iter()
        .map(|s| s.to_string())
        .chain(dataset.covariate_names().iter().cloned())
        .collect();
    sink.row(&header)?;
    for r in dataset.records() {
        let mut fields = vec![r.id.clone(), format_number(r.time), r.status.indicator().to_string()];
        fields.extend(r.covariates.iter().map(|&x| format_number(x)));
        sink.row(&fields)?;
    }
    sink.finish()
}

/// Reads a headed CSV of numbers, returning the header and rows.
pub fn read_numeric_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| row_error(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let row = row.map_err(|e| row_error(path, k as u64 + 2, e.to_string()))?;
        let line = row.position().map_or(k as u64 + 2, |p| p.line());
        let values = row
            .iter()
            .map(|s| parse_number(s).ok_or_else(|| row_error(path, line, format!("`{s}` is not a number"))))
            .collect::<CliResult<Vec<_>>>()?;
        rows.push(values);
    }
    Ok((header, rows))
}

/// A data row with its 1-based line number.
pub type NumberedRow = (u64, Vec<String>);

/// Reads a headed CSV of strings.
pub fn read_string_table(path: &Path) -> CliResult<(Vec<String>, Vec<NumberedRow>)> {
    let file = File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| row_error(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let row = row.map_err(|e| row_error(path, k as u64 + 2, e.to_string()))?;
        let line = row.position().map_or(k as u64 + 2, |p| p.line());
        rows.push((line, row.iter().map(str::to_string).collect()));
    }
    Ok((header, rows))
}

/// Flushes stderr diagnostics; failures there are not actionable.
pub fn warn(message: &str) {
    let _ = writeln!(io::stderr(), "warning: {message}");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(-2.5), "-2.5");
        assert_eq!(format_number(52.6048383657), "52.6048383657");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(1e-7), "1e-7");
        assert_eq!(format_number(1.5e15), "1.5e15");
        assert_eq!(format_number(123456789012.0), "123456789012");
        assert_eq!(format_number(f64::INFINITY), "inf");
        assert_eq!(format_number(0.0001), "0.0001");
    }

    #[test]
    fn numbers_round_trip_at_printed_precision() {
        for &x in &[std::f64::consts::PI, -1e-9, 6.02214076e23, 0.1 + 0.2, 1151.29254649702] {
            let s = format_number(x);
            let back = parse_number(&s).unwrap();
            assert!((back - x).abs() <= 1e-11 * x.abs(), "{x} -> {s}");
            assert_eq!(format_number(back), s);
        }
    }
}
