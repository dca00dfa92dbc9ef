//! The sample matrix shared by every stage of the pipeline, plus its CSV form.
//!
//! CSV files carry a `x0,...,x{M-1}` header and one sample per line. Values are
//! written in scientific notation with 17 significant digits, which is enough
//! for every `f64` to survive a write/read cycle bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Result, RomeError};

/// `N x M` real-valued samples with the seed they were generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Array2<f64>,
    seed: u64,
    spec_tag: Option<String>,
}

impl Dataset {
    /// Wraps a sample matrix. Fails on an empty matrix or any non-finite entry.
    pub fn new(values: Array2<f64>, seed: u64) -> Result<Self> {
        let (n, m) = values.dim();
        if n == 0 || m == 0 {
            return Err(RomeError::InsufficientData(format!(
                "dataset must have at least one row and one column, got {n}x{m}"
            )));
        }
        if let Some(((row, col), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(RomeError::Data(format!(
                "non-finite value {v} at row {row}, column {col}"
            )));
        }
        let values = if values.is_standard_layout() {
            values
        } else {
            values.as_standard_layout().into_owned()
        };
        Ok(Self {
            values,
            seed,
            spec_tag: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], seed: u64) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != m) {
            return Err(RomeError::Shape(format!(
                "row {bad} has {} columns, expected {m}",
                rows[bad].len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), m), flat)
            .map_err(|e| RomeError::Shape(e.to_string()))?;
        Self::new(values, seed)
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.spec_tag = Some(tag.into());
        self
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    /// Row `i` as a contiguous slice.
    pub fn row_slice(&self, i: usize) -> &[f64] {
        let m = self.dims();
        &self.values.as_slice().expect("standard layout")[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values
            .as_slice()
            .expect("standard layout")
            .chunks_exact(self.dims())
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of dimensions.
    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec_tag(&self) -> Option<&str> {
        self.spec_tag.as_deref()
    }

    /// Rows picked by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Array2<f64> {
        self.values.select(ndarray::Axis(0), indices)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((0..self.dims()).map(|j| format!("x{j}")))?;
        for row in self.values.rows() {
            w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let m = r.headers()?.len();
        let mut flat = Vec::new();
        let mut n = 0;
        for record in r.records() {
            let record = record?;
            if record.len() != m {
                return Err(RomeError::Shape(format!(
                    "line {} has {} fields, header has {m}",
                    n + 2,
                    record.len()
                )));
            }
            for field in record.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    RomeError::Data(format!("cannot parse {field:?} as a number"))
                })?;
                flat.push(v);
            }
            n += 1;
        }
        let values =
            Array2::from_shape_vec((n, m), flat).map_err(|e| RomeError::Shape(e.to_string()))?;
        Self::new(values, 0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), |w| self.write_csv(w))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}
