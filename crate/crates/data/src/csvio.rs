//! CSV ingestion and emission.
//!
//! Files carry a header row; all data cells must parse as floats. Errors
//! name the offending *data* row (1-based, not counting the header) and
//! column so users can fix files without guesswork.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::{DataError, Dataset};

/// Loads a delimited file into a [`Dataset`]. The target is the column named
/// `target_column`, or the last column when `None`; all other columns become
/// features in file order.
pub fn load_csv(path: &Path, target_column: Option<&str>) -> Result<Dataset, DataError> {
    let io_err = |source: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(source),
            other => DataError::Csv {
                row: 0,
                detail: format!("{other:?}"),
            },
        })?;

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::Csv {
            row: 0,
            detail: format!("unreadable header: {e}"),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    let width = header.len();
    if width < 2 {
        return Err(DataError::NoFeatures);
    }
    let target_idx = match target_column {
        Some(name) => header.iter().position(|h| h == name).ok_or_else(|| {
            DataError::MissingTargetColumn {
                name: name.to_owned(),
                header: header.clone(),
            }
        })?,
        None => width - 1,
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 1;
        let record = record.map_err(|e| DataError::Csv {
            row: row_no,
            detail: e.to_string(),
        })?;
        if record.len() != width {
            return Err(DataError::Csv {
                row: row_no,
                detail: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let mut row = Vec::with_capacity(width);
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| DataError::Csv {
                row: row_no,
                detail: format!("column {:?}: cannot parse {field:?} as a number", header[col]),
            })?;
            if !value.is_finite() {
                return Err(DataError::Csv {
                    row: row_no,
                    detail: format!("column {:?}: non-finite value {field:?}", header[col]),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }

    let n = rows.len();
    let d = width - 1;
    let mut x = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        let mut feature = 0;
        for (j, &value) in row.iter().enumerate() {
            if j == target_idx {
                y[i] = value;
            } else {
                x[(i, feature)] = value;
                feature += 1;
            }
        }
    }
    Dataset::new(x, y, path.display().to_string())
}

/// Writes a header plus one record per matrix row. Values use Rust's default
/// float formatting, which is the shortest string that round-trips exactly,
/// so a write-then-load cycle reproduces every bit.
pub fn write_csv(path: &Path, header: &[&str], rows: &DMatrix<f64>) -> Result<(), DataError> {
    if header.len() != rows.ncols() {
        return Err(DataError::DimensionMismatch {
            context: "CSV header vs columns".into(),
            expected: rows.ncols(),
            got: header.len(),
        });
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    let as_io = |e: csv::Error| DataError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    };
    writer.write_record(header).map_err(as_io)?;
    for i in 0..rows.nrows() {
        let record: Vec<String> = (0..rows.ncols()).map(|j| rows[(i, j)].to_string()).collect();
        writer.write_record(&record).map_err(as_io)?;
    }
    writer.flush().map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}
