//! Minimal dense row-major buffer. Networks and batches only ever need rank-1
//! and rank-2 views, so this stays deliberately small: shape bookkeeping,
//! row access, and finiteness checks.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorBuf {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TensorBuf {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(Error::Contract(format!(
                "shape {shape:?} wants {want} elements, got {}",
                data.len()
            )));
        }
        Ok(TensorBuf { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        TensorBuf {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Stack equal-length rows into a rank-2 buffer.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Contract(String::from("no rows to stack")));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Contract(format!(
                    "row {i} has width {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::matrix(rows.len(), cols, data)
    }

    /// Stack rank-2 buffers side by side; every part must agree on rows.
    /// Zero-column parts are legal (e.g. an empty skill block).
    pub fn hcat(parts: &[&TensorBuf]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Contract(String::from("nothing to concatenate")));
        }
        let rows = parts[0].rows();
        let mut cols = 0;
        for (i, p) in parts.iter().enumerate() {
            if p.rows() != rows {
                return Err(Error::Contract(format!(
                    "part {i} has {} rows, expected {rows}",
                    p.rows()
                )));
            }
            cols += p.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Self::matrix(rows, cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count of a rank-2 buffer.
    pub fn rows(&self) -> usize {
        assert_eq!(self.rank(), 2, "rows() on rank-{} buffer", self.rank());
        self.shape[0]
    }

    /// Column count of a rank-2 buffer.
    pub fn cols(&self) -> usize {
        assert_eq!(self.rank(), 2, "cols() on rank-{} buffer", self.rank());
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Every exposed operation is expected to leave buffers finite; this is
    /// the check used at module boundaries.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if math::all_finite(&self.data) {
            Ok(())
        } else {
            Err(Error::Contract(format!("non-finite values in {what}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match() {
        assert!(TensorBuf::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(TensorBuf::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn rows_are_contiguous() {
        let t = TensorBuf::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(t.row(0), &[1., 2., 3.]);
        assert_eq!(t.row(1), &[4., 5., 6.]);
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = TensorBuf::from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn finite_check_flags_nan() {
        let mut t = TensorBuf::zeros(vec![2, 2]);
        assert!(t.check_finite("t").is_ok());
        t.data_mut()[3] = f64::NAN;
        assert!(t.check_finite("t").is_err());
    }
}
