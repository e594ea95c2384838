//! CSV (de)serialization for samples, matrices, and discrete distributions.
//!
//! Format: row-major, comma-separated, `.` decimal separator. A single header
//! line is allowed as the first line; it is recognized by containing a field
//! that does not parse as a number. Blank lines are ignored. Writers emit no
//! header for numeric tables so that output can be read back as input.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{PsdMatrix, Sample, SymMatrix};
use crate::scalar::DiscreteDistribution;

/// Parses numeric rows, skipping an optional header on the first line.
pub fn read_table<R: BufRead>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut first = true;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            trimmed.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                if let Some(bad) = vals.iter().find(|x| !x.is_finite()) {
                    return Err(Error::Parse { line: idx + 1, msg: format!("non-finite value {bad}") });
                }
                if let Some(prev) = rows.last().map(|r: &Vec<f64>| r.len()) {
                    if prev != vals.len() {
                        return Err(Error::Parse {
                            line: idx + 1,
                            msg: format!("expected {prev} fields, found {}", vals.len()),
                        });
                    }
                }
                rows.push(vals);
            }
            Err(e) if !first => {
                return Err(Error::Parse { line: idx + 1, msg: e.to_string() });
            }
            Err(_) => {}
        }
        first = false;
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 0, msg: "no numeric rows".into() });
    }
    Ok(rows)
}

pub fn read_sample<R: BufRead>(reader: R) -> Result<Sample> {
    Sample::from_rows(&read_table(reader)?)
}

pub fn read_sample_file(path: impl AsRef<Path>) -> Result<Sample> {
    let f = std::fs::File::open(path)?;
    read_sample(std::io::BufReader::new(f))
}

pub fn read_matrix<R: BufRead>(reader: R) -> Result<SymMatrix> {
    let rows = read_table(reader)?;
    if rows.len() != rows[0].len() {
        return Err(Error::Parse {
            line: 0,
            msg: format!("matrix must be square, got {}x{}", rows.len(), rows[0].len()),
        });
    }
    SymMatrix::from_rows(&rows)
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<SymMatrix> {
    let f = std::fs::File::open(path)?;
    read_matrix(std::io::BufReader::new(f))
}

/// Two-column `value,prob` table.
pub fn read_distribution<R: BufRead>(reader: R) -> Result<DiscreteDistribution> {
    let rows = read_table(reader)?;
    if rows[0].len() != 2 {
        return Err(Error::Parse { line: 0, msg: "distribution CSV needs columns value,prob".into() });
    }
    DiscreteDistribution::new(rows.into_iter().map(|r| (r[0], r[1])).collect())
}

pub fn read_distribution_file(path: impl AsRef<Path>) -> Result<DiscreteDistribution> {
    let f = std::fs::File::open(path)?;
    read_distribution(std::io::BufReader::new(f))
}

fn format_rows<'a>(rows: impl Iterator<Item = &'a [f64]>) -> String {
    let mut out = String::new();
    for row in rows {
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // `{}` on f64 is the shortest representation that round-trips.
            let _ = write!(out, "{x}");
        }
        out.push('\n');
    }
    out
}

pub fn matrix_to_csv(m: &SymMatrix) -> String {
    format_rows(m.as_slice().chunks(m.dim()))
}

pub fn sample_to_csv(s: &Sample) -> String {
    format_rows(s.rows())
}

pub fn write_matrix<W: Write>(mut w: W, m: &PsdMatrix) -> Result<()> {
    w.write_all(matrix_to_csv(m).as_bytes())?;
    Ok(())
}

pub fn distribution_to_csv(d: &DiscreteDistribution) -> String {
    let mut out = String::from("value,prob\n");
    for (v, p) in d.atoms() {
        let _ = writeln!(out, "{v},{p}");
    }
    out
}
