use std::fs::File;
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, Label};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Column name used for labels by [`save_csv`].
pub const DEFAULT_LABEL_COLUMN: &str = "label";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => Error::Parse {
            row: 0,
            column: String::new(),
            message: format!("{other:?}"),
        },
    }
}

/// Reads a header-first CSV file. Every column except `label_column` is a feature;
/// labels must be `0`, `1` or `-1` (unlabeled). Reported row numbers are 1-based
/// line numbers in the file, so the first data row is row 2.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let label_pos = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Parse {
            row: 1,
            column: label_column.to_string(),
            message: "label column not found in header".into(),
        })?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_pos)
        .map(|(_, h)| h.clone())
        .collect();
    if names.is_empty() {
        return Err(Error::Parse {
            row: 1,
            column: String::new(),
            message: "no feature columns".into(),
        });
    }

    let mut values: Vec<T> = Vec::new();
    let mut labels = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(k + 2);
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if j == label_pos {
                let label = cell
                    .parse::<i64>()
                    .ok()
                    .and_then(Label::from_code)
                    .ok_or_else(|| Error::UnknownLabel {
                        row,
                        value: cell.to_string(),
                    })?;
                labels.push(label);
            } else {
                let v = cell.parse::<T>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    row,
                    column: header[j].clone(),
                    message: format!("{cell:?} is not a finite number"),
                })?;
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            row: 2,
            column: String::new(),
            message: "file has no data rows".into(),
        });
    }
    let features = Array2::from_shape_vec((labels.len(), names.len()), values)
        .map_err(|e| Error::dim(e.to_string()))?;
    Dataset::new(features, labels, names)
}

/// Writes `ds` with its feature columns first and a trailing `label` column.
/// Values use 17 significant digits so `f64` data round-trips exactly.
pub fn save_csv<T: Scalar>(ds: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = ds.feature_names().iter().map(String::as_str).collect();
    header.push(DEFAULT_LABEL_COLUMN);
    writer.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for (row, label) in ds.features().rows().into_iter().zip(ds.labels()) {
        fields.clear();
        fields.extend(row.iter().map(|v| format!("{v:.16e}")));
        fields.push(label.code().to_string());
        writer.write_record(&fields).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}
