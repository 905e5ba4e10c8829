//! CSV ingestion. Computer data use the header `t1..tq,x1..xp,y`, experimental
//! data `x1..xp,y`; the header row is mandatory.

use std::path::Path;

use codetune_core::{ComputerData, ExperimentalData};
use nalgebra::{DMatrix, DVector};

use crate::error::CliError;

pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let name = path.display();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| CliError::new("io", format!("{name}: {e}")))?;
    let headers: Vec<String> = reader.headers().map_err(|e| CliError::parse(format!("{name}: header: {e}")))?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        // Line 1 is the header.
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::parse(format!("{name}: line {line}: {e}")))?;
        let row = rec
            .iter()
            .zip(&headers)
            .map(|(cell, col)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::parse(format!("{name}: line {line}, column '{col}': invalid number '{cell}'")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::parse(format!("{name}: no data rows")));
    }
    Ok(Table { headers, rows })
}

/// Counts the leading `prefix1, prefix2, ...` run starting at `from`.
fn numbered_run(headers: &[String], from: usize, prefix: char) -> usize {
    headers[from..].iter().enumerate().take_while(|(k, h)| h.strip_prefix(prefix).and_then(|n| n.parse::<usize>().ok()) == Some(k + 1)).count()
}

fn check_layout(path: &Path, headers: &[String], q: usize, p: usize, expected: &str) -> Result<(), CliError> {
    if q + p + 1 != headers.len() || headers.last().map(String::as_str) != Some("y") {
        return Err(CliError::parse(format!("{}: header must be {expected}, got '{}'", path.display(), headers.join(","))));
    }
    Ok(())
}

fn column(rows: &[Vec<f64>], from: usize, width: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), width, |i, j| rows[i][from + j])
}

pub fn read_computer(path: &Path) -> Result<ComputerData, CliError> {
    let t = read_table(path)?;
    let q = numbered_run(&t.headers, 0, 't');
    let p = numbered_run(&t.headers, q, 'x');
    check_layout(path, &t.headers, q, p, "t1..tq,x1..xp,y")?;
    let y = DVector::from_iterator(t.rows.len(), t.rows.iter().map(|r| r[q + p]));
    ComputerData::new(column(&t.rows, 0, q), column(&t.rows, q, p), y).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn read_experimental(path: &Path) -> Result<ExperimentalData, CliError> {
    let t = read_table(path)?;
    let p = numbered_run(&t.headers, 0, 'x');
    check_layout(path, &t.headers, 0, p, "x1..xp,y")?;
    let y = DVector::from_iterator(t.rows.len(), t.rows.iter().map(|r| r[p]));
    ExperimentalData::new(column(&t.rows, 0, p), y).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn write_table(path: &Path, headers: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::new("io", format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(headers).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
