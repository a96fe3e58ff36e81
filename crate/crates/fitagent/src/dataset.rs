//! Tabular (x, y) datasets loaded from CSV.
//!
//! Files are comma-separated UTF-8 with a mandatory header row. Unit labels
//! come from header suffixes of the form `name_unit` (`sigma_MPa` -> name
//! `sigma`, unit `MPa`); the label is trusted as-is, values are never
//! rescaled. A column can be requested either by its full header text or by
//! its base name when that is unambiguous.

use std::path::{Path, PathBuf};

use crate::numfmt::sig4;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error in `{path}`: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("`{path}` has no header row")]
    MissingHeader { path: PathBuf },
    #[error("column `{name}` not found in `{path}` (available: {available})")]
    MissingColumn {
        name: String,
        path: PathBuf,
        available: String,
    },
    #[error("column `{name}` is ambiguous in `{path}` (candidates: {candidates})")]
    AmbiguousColumn {
        name: String,
        path: PathBuf,
        candidates: String,
    },
    #[error("row {row} of `{path}` has {found} fields, expected {expected}")]
    MalformedRow {
        row: usize,
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("non-numeric cell `{value}` in column `{column}`, row {row} of `{path}`")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
        path: PathBuf,
    },
    #[error("dataset needs at least 2 rows, found {found}")]
    TooFewRows { found: usize },
    #[error("x and y have different lengths ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
}

/// A loaded (x, y) series. `x` and `y` are the same length, at least 2, and
/// every value is finite.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub x_name: String,
    pub y_name: String,
    pub x_unit: String,
    pub y_unit: String,
    pub source_path: PathBuf,
    pub n: usize,
}

impl Dataset {
    pub fn new(
        x: Vec<f64>,
        y: Vec<f64>,
        x_name: &str,
        y_name: &str,
        x_unit: &str,
        y_unit: &str,
    ) -> Result<Dataset, DataError> {
        if x.len() != y.len() {
            return Err(DataError::LengthMismatch {
                x: x.len(),
                y: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(DataError::TooFewRows { found: x.len() });
        }
        if let Some(index) = x
            .iter()
            .chain(y.iter())
            .position(|v| !v.is_finite())
            .map(|i| i % x.len())
        {
            return Err(DataError::NonFinite { index });
        }
        let n = x.len();
        Ok(Dataset {
            x,
            y,
            x_name: x_name.to_string(),
            y_name: y_name.to_string(),
            x_unit: x_unit.to_string(),
            y_unit: y_unit.to_string(),
            source_path: PathBuf::new(),
            n,
        })
    }

    pub fn x_range(&self) -> (f64, f64) {
        let lo = self.x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn y_range(&self) -> (f64, f64) {
        let lo = self.y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Splits a header into (base name, unit). No underscore means the unit is
/// unknown.
fn split_header(header: &str) -> (&str, &str) {
    match header.split_once('_') {
        Some((name, unit)) if !name.is_empty() && !unit.is_empty() => (name, unit),
        _ => (header, "unknown"),
    }
}

/// Resolves a requested column against the header row: exact header text
/// first, then a unique base-name match.
fn resolve_column(
    headers: &[String],
    requested: &str,
    path: &Path,
) -> Result<usize, DataError> {
    if let Some(i) = headers.iter().position(|h| h == requested) {
        return Ok(i);
    }
    let base_matches: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| split_header(h).0 == requested)
        .map(|(i, _)| i)
        .collect();
    match base_matches.len() {
        1 => Ok(base_matches[0]),
        0 => Err(DataError::MissingColumn {
            name: requested.to_string(),
            path: path.to_path_buf(),
            available: headers.join(", "),
        }),
        _ => Err(DataError::AmbiguousColumn {
            name: requested.to_string(),
            path: path.to_path_buf(),
            candidates: base_matches
                .iter()
                .map(|&i| headers[i].clone())
                .collect::<Vec<_>>()
                .join(", "),
        }),
    }
}

/// Loads two columns of a CSV file. Fully blank rows are skipped; any other
/// malformed row is a hard error naming its 1-based data row number.
pub fn load_csv(
    path: impl AsRef<Path>,
    x_column: &str,
    y_column: &str,
) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);

    let headers: Vec<String> = reader
        .headers()
        .map_err(|source| DataError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(DataError::MissingHeader {
            path: path.to_path_buf(),
        });
    }

    let xi = resolve_column(&headers, x_column, path)?;
    let yi = resolve_column(&headers, y_column, path)?;

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut row = 0usize;
    for record in reader.records() {
        let record = record.map_err(|source| DataError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        row += 1;
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() != headers.len() {
            return Err(DataError::MalformedRow {
                row,
                path: path.to_path_buf(),
                expected: headers.len(),
                found: record.len(),
            });
        }
        let cell = |col: usize| -> Result<f64, DataError> {
            let raw = record.get(col).unwrap_or("").trim();
            let parsed: Result<f64, _> = raw.parse();
            match parsed {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(DataError::NonNumericCell {
                    row,
                    column: headers[col].clone(),
                    value: raw.to_string(),
                    path: path.to_path_buf(),
                }),
            }
        };
        x.push(cell(xi)?);
        y.push(cell(yi)?);
    }

    if x.len() < 2 {
        return Err(DataError::TooFewRows { found: x.len() });
    }

    let (x_name, x_unit) = split_header(&headers[xi]);
    let (y_name, y_unit) = split_header(&headers[yi]);
    let n = x.len();
    Ok(Dataset {
        x,
        y,
        x_name: x_name.to_string(),
        y_name: y_name.to_string(),
        x_unit: x_unit.to_string(),
        y_unit: y_unit.to_string(),
        source_path: path.to_path_buf(),
        n,
    })
}

/// One-line summary with ranges at four significant digits.
pub fn summarize(d: &Dataset) -> String {
    let (xlo, xhi) = d.x_range();
    let (ylo, yhi) = d.y_range();
    format!(
        "{} points. {} range: [{}, {}], {} range: [{}, {}]",
        d.n,
        d.x_name,
        sig4(xlo),
        sig4(xhi),
        d.y_name,
        sig4(ylo),
        sig4(yhi)
    )
}
