//! Dense row-major `f64` matrices.
//!
//! Every public operation rejects non-finite inputs and verifies that its
//! output is finite, so a NaN can never leak silently from one stage of the
//! pipeline into the next. There is no broadcasting; shapes must match
//! exactly.

use std::fmt;

use crate::error::{Error, Result, Shape};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Elementwise binary operation for [`Matrix::zip_map`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZipOp {
    Add,
    Sub,
    Hadamard,
}

impl ZipOp {
    fn name(self) -> &'static str {
        match self {
            ZipOp::Add => "add",
            ZipOp::Sub => "sub",
            ZipOp::Hadamard => "hadamard",
        }
    }

    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            ZipOp::Add => a + b,
            ZipOp::Sub => a - b,
            ZipOp::Hadamard => a * b,
        }
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_owned()))
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Data(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        check_finite(&data, "matrix data")?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from an already validated buffer.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    /// Wraps a freshly computed buffer, rejecting it if anything overflowed.
    fn checked(rows: usize, cols: usize, data: Vec<f64>, op: &str) -> Result<Self> {
        check_finite(&data, op)?;
        Ok(Self { rows, cols, data })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    /// # Panics
    /// If either dimension is zero or `value` is not finite.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        assert!(value.is_finite(), "fill value must be finite");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::Data("ragged rows".to_owned()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn row_vector(values: Vec<f64>) -> Result<Self> {
        Self::new(1, values.len(), values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Mutable access for in-place parameter updates. Callers are
    /// responsible for keeping every entry finite.
    #[inline]
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape("matmul", self.shape(), other.shape()));
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let out = gemm(m, k, n, &self.data, (k, 1), &other.data, (n, 1));
        Self::checked(m, n, out, "matmul")
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::shape("matmul_tn", self.shape(), other.shape()));
        }
        let (m, k, n) = (self.cols, self.rows, other.cols);
        let out = gemm(m, k, n, &self.data, (1, m), &other.data, (n, 1));
        Self::checked(m, n, out, "matmul_tn")
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::shape("matmul_nt", self.shape(), other.shape()));
        }
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let out = gemm(m, k, n, &self.data, (k, 1), &other.data, (1, k));
        Self::checked(m, n, out, "matmul_nt")
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self::from_parts(self.cols, self.rows, out)
    }

    pub fn zip_map(&self, other: &Matrix, op: ZipOp) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op.name(), self.shape(), other.shape()));
        }
        let out = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| op.apply(a, b))
            .collect();
        Self::checked(self.rows, self.cols, out, op.name())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, ZipOp::Add)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, ZipOp::Sub)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, ZipOp::Hadamard)
    }

    pub fn scale(&self, c: f64) -> Result<Matrix> {
        if !c.is_finite() {
            return Err(Error::NonFinite("scale factor".to_owned()));
        }
        self.map(|v| v * c)
    }

    /// Elementwise map; fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        let out = self.data.iter().map(|&v| f(v)).collect();
        Self::checked(self.rows, self.cols, out, "map")
    }

    /// Adds `row` to every row of the matrix.
    pub fn add_row(&self, row: &[f64]) -> Result<Matrix> {
        if row.len() != self.cols {
            return Err(Error::shape("add_row", self.shape(), (1, row.len())));
        }
        let mut out = self.data.clone();
        for chunk in out.chunks_exact_mut(self.cols) {
            for (o, &b) in chunk.iter_mut().zip(row) {
                *o += b;
            }
        }
        Self::checked(self.rows, self.cols, out, "add_row")
    }

    /// Sum of each column, in row order.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Matrix> {
        if indices.is_empty() {
            return Err(Error::Data("cannot select zero rows".to_owned()));
        }
        let mut out = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::Data(format!(
                    "row {i} out of range for {} rows",
                    self.rows
                )));
            }
            out.extend_from_slice(self.row(i));
        }
        Ok(Self::from_parts(indices.len(), self.cols, out))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::shape("max_abs_diff", self.shape(), other.shape()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

#[inline]
/// Row-major `m × n` product of an `m × k` and a `k × n` operand, each
/// given as a buffer plus `(row, column)` strides.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
) -> Vec<f64> {
    debug_assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(k == 0 || n == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    let mut c = vec![0.0; m * n];
    // SAFETY: the strides address only elements inside `a` and `b` (checked
    // above for every caller's shapes), and `c` holds exactly m × n values.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            f.debug_list().entries(self.iter_rows()).finish()
        } else {
            write!(f, "[..]")
        }
    }
}
