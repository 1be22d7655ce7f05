//! Row-major tensor containers.
//!
//! Integer data is held as `i64` regardless of the logical bit-width; the
//! declared width is a contract checked on construction and by the kernels.

use crate::error::{Error, Result};

pub(crate) fn checked_numel(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Argument(format!(
            "dims must be non-empty and positive, got {dims:?}"
        )));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Argument(format!("element count of {dims:?} overflows")))
}

/// Largest magnitude representable by a symmetric `bits`-wide integer.
#[inline]
pub const fn qmax(bits: u8) -> i64 {
    (1i64 << (bits - 1)) - 1
}

/// Floating-point tensor: the oracle's working type and the quantizer's input.
#[derive(Debug, Clone, PartialEq)]
pub struct FpTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl FpTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = checked_numel(&dims)?;
        if n != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {n} elements, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("non-finite value at index {i}")));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n = checked_numel(&dims)?;
        Ok(Self {
            dims,
            data: vec![0.0; n],
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Length of the innermost dimension.
    pub fn row_len(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.row_len())
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data)
    }
}

/// Integer tensor paired with a real scaling factor: value ≈ scale · data.
#[derive(Debug, Clone, PartialEq)]
pub struct QTensor {
    dims: Vec<usize>,
    data: Vec<i64>,
    scale: f64,
    bits: u8,
}

impl QTensor {
    pub fn new(dims: Vec<usize>, data: Vec<i64>, scale: f64, bits: u8) -> Result<Self> {
        let n = checked_numel(&dims)?;
        if n != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {n} elements, got {}",
                data.len()
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Argument(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        if !(2..=32).contains(&bits) {
            return Err(Error::Argument(format!(
                "bit-width must be in 2..=32, got {bits}"
            )));
        }
        let lo = -(1i64 << (bits - 1));
        let hi = qmax(bits);
        if let Some(i) = data.iter().position(|&v| v < lo || v > hi) {
            return Err(Error::Range(format!(
                "element {i} = {} does not fit {bits} bits",
                data[i]
            )));
        }
        Ok(Self {
            dims,
            data,
            scale,
            bits,
        })
    }

    pub fn zeros(dims: Vec<usize>, scale: f64, bits: u8) -> Result<Self> {
        let n = checked_numel(&dims)?;
        Self::new(dims, vec![0; n], scale, bits)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<i64> {
        self.data
    }

    pub fn row_len(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, i64> {
        self.data.chunks_exact(self.row_len())
    }

    /// Treats the tensor as a matrix of `rows × row_len`.
    pub fn matrix_dims(&self) -> (usize, usize) {
        let cols = self.row_len();
        (self.data.len() / cols, cols)
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data, self.scale, self.bits)
    }

    /// Same integers, different scale metadata.
    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Argument(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        self.scale = scale;
        Ok(self)
    }

    /// Row slice `[start, start+count)` of a matrix-shaped tensor.
    pub fn slice_rows(&self, start: usize, count: usize) -> Result<Self> {
        let (rows, cols) = self.matrix_dims();
        if start + count > rows || count == 0 {
            return Err(Error::Shape(format!(
                "rows {start}..{} out of {rows}",
                start + count
            )));
        }
        Self::new(
            vec![count, cols],
            self.data[start * cols..(start + count) * cols].to_vec(),
            self.scale,
            self.bits,
        )
    }

    /// Column slice `[start, start+count)` of a matrix-shaped tensor.
    pub fn slice_cols(&self, start: usize, count: usize) -> Result<Self> {
        let (rows, cols) = self.matrix_dims();
        if start + count > cols || count == 0 {
            return Err(Error::Shape(format!(
                "cols {start}..{} out of {cols}",
                start + count
            )));
        }
        let data = self
            .rows()
            .flat_map(|r| r[start..start + count].iter().copied())
            .collect();
        Self::new(vec![rows, count], data, self.scale, self.bits)
    }

    pub fn transpose(&self) -> Result<Self> {
        let (rows, cols) = self.matrix_dims();
        let mut data = vec![0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = self.data[r * cols + c];
            }
        }
        Self::new(vec![cols, rows], data, self.scale, self.bits)
    }

    /// Concatenates matrices with identical row count, scale and width along columns.
    pub fn concat_cols(parts: &[QTensor]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Argument("nothing to concatenate".into()))?;
        let (rows, _) = first.matrix_dims();
        let mut total = 0;
        for p in parts {
            let (r, c) = p.matrix_dims();
            if r != rows || p.scale != first.scale || p.bits != first.bits {
                return Err(Error::Shape(
                    "concatenated parts disagree in rows, scale or width".into(),
                ));
            }
            total += c;
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let c = p.row_len();
                data.extend_from_slice(&p.data[r * c..(r + 1) * c]);
            }
        }
        Self::new(vec![rows, total], data, first.scale, first.bits)
    }
}
