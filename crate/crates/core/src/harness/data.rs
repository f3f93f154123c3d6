//! Header-free CSV grids.
//!
//! A data tensor is stored with one row per domain multi-index and one
//! column per feature multi-index, both enumerated with the last mode
//! varying fastest. Reading the rows top to bottom therefore yields the
//! tensor's elements in its native linear order.

use std::path::Path;

use crate::graphs::GraphShiftOperator;
use crate::gtn::DataTensorMeta;
use crate::tensor::DenseTensor;

use super::{HarnessError, Result};

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a numeric grid; returns `(rows, cols, row-major values)`.
fn read_grid(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(path, source),
            other => HarnessError::Csv {
                path: path.to_path_buf(),
                row: 0,
                message: format!("{other:?}"),
            },
        })?;
    let mut cols = None;
    let mut rows = 0usize;
    let mut values = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HarnessError::Csv {
            path: path.to_path_buf(),
            row: r + 1,
            message: e.to_string(),
        })?;
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| HarnessError::Parse {
                path: path.to_path_buf(),
                row: r + 1,
                col: c + 1,
                value: cell.to_string(),
            })?;
            values.push(v);
        }
        cols.get_or_insert(record.len());
        rows += 1;
    }
    Ok((rows, cols.unwrap_or(0), values))
}

/// Loads a tensor laid out as described in the module docs.
pub fn load_data_tensor(path: &Path, meta: &DataTensorMeta) -> Result<DenseTensor> {
    let want_rows: usize = meta.domain_dims().iter().product();
    let want_cols: usize = meta.feature_dims().iter().product();
    let (rows, cols, values) = read_grid(path)?;
    if rows != want_rows || cols != want_cols {
        return Err(HarnessError::Shape(format!(
            "{}: expected {want_rows} rows of {want_cols} values for layout {:?}, found {rows} rows of {cols}",
            path.display(),
            meta.dims()
        )));
    }
    Ok(DenseTensor::from_shape(meta.shape(), values)?)
}

/// Writes a tensor in the layout read by [`load_data_tensor`]. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_data_tensor(path: &Path, t: &DenseTensor, meta: &DataTensorMeta) -> Result<()> {
    if t.dims() != meta.dims().as_slice() {
        return Err(HarnessError::Shape(format!(
            "tensor {} does not match layout {:?}",
            t.shape(),
            meta.dims()
        )));
    }
    let cols: usize = meta.feature_dims().iter().product();
    write_rows(path, t.data(), cols)
}

fn write_rows(path: &Path, data: &[f64], cols: usize) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| HarnessError::Csv {
            path: path.to_path_buf(),
            row: 0,
            message: e.to_string(),
        })?;
    for (r, row) in data.chunks(cols.max(1)).enumerate() {
        writer
            .write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| HarnessError::Csv {
                path: path.to_path_buf(),
                row: r + 1,
                message: e.to_string(),
            })?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

/// Any rectangular grid as a `rows × cols` matrix.
pub fn load_matrix_csv(path: &Path) -> Result<DenseTensor> {
    let (rows, cols, values) = read_grid(path)?;
    if rows == 0 || cols == 0 {
        return Err(HarnessError::Shape(format!("{}: empty grid", path.display())));
    }
    Ok(DenseTensor::new(vec![rows, cols], values)?)
}

pub fn write_matrix_csv(path: &Path, m: &DenseTensor) -> Result<()> {
    if m.order() != 2 {
        return Err(HarnessError::Shape(format!("expected a matrix, got {}", m.shape())));
    }
    write_rows(path, m.data(), m.cols())
}

/// Square non-negative grid.
pub fn load_adjacency_csv(path: &Path) -> Result<GraphShiftOperator> {
    let m = load_matrix_csv(path)?;
    if m.rows() != m.cols() {
        return Err(HarnessError::Shape(format!(
            "{}: adjacency must be square, got {}",
            path.display(),
            m.shape()
        )));
    }
    if let Some(i) = m.data().iter().position(|&v| v < 0.0) {
        return Err(crate::graphs::GraphError::NegativeEntry {
            row: i / m.cols(),
            col: i % m.cols(),
        }
        .into());
    }
    Ok(GraphShiftOperator::adjacency(m)?)
}
