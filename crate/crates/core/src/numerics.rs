//! Dense row-major matrices and the handful of kernels the recurrent code needs.
//!
//! Every reduction runs in a fixed order: products accumulate left to right over
//! the inner dimension, norms sum entries in storage order. Each column of a
//! product depends only on the matching column of the right operand, so a
//! sentence scored alone and the same sentence scored inside a batch produce
//! bit-identical numbers.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::{Debug, Display, LowerExp};

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating-point width of a model or tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::Single => "f32",
            Precision::Double => "f64",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "f32" | "single" => Some(Precision::Single),
            "f64" | "double" => Some(Precision::Double),
            _ => None,
        }
    }
}

/// Scalar type usable in matrices: `f32` or `f64`.
pub trait Real:
    Float + Default + Debug + Display + LowerExp + Send + Sync + 'static + core::iter::Sum
{
    const PRECISION: Precision;
    const BYTES: usize;

    fn cast(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    /// Reads one value from exactly `Self::BYTES` little-endian bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Single;
    const BYTES: usize = 4;

    fn cast(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 4];
        buf.copy_from_slice(bytes);
        f32::from_le_bytes(buf)
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Double;
    const BYTES: usize = 8;

    fn cast(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(bytes);
        f64::from_le_bytes(buf)
    }
}

/// Dense 2-D array stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("Matrix::new", (rows, cols), (data.len(), 1)));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Builds a matrix from row slices; all rows must have the same length.
    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::dim("Matrix::from_rows", (1, cols), (1, row.len())));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Column vector (n x 1).
    pub fn column(values: &[T]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column_values(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[T]) {
        debug_assert_eq!(values.len(), self.rows);
        for (r, &v) in values.iter().enumerate() {
            self.set(r, c, v);
        }
    }

    /// Copies column `src_col` of `src` into column `dst_col` of `self`.
    pub fn copy_column_from(&mut self, dst_col: usize, src: &Matrix<T>, src_col: usize) {
        debug_assert_eq!(self.rows, src.rows);
        for r in 0..self.rows {
            self.data[r * self.cols + dst_col] = src.data[r * src.cols + src_col];
        }
    }

    /// New matrix made of the listed columns, in the listed order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix<T> {
        let mut out = Matrix::zeros(self.rows, cols.len());
        for (j, &c) in cols.iter().enumerate() {
            out.copy_column_from(j, self, c);
        }
        out
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn hstack(parts: &[&Matrix<T>]) -> Result<Matrix<T>> {
        let rows = parts.first().map_or(0, |m| m.rows);
        let total: usize = parts.iter().map(|m| m.cols).sum();
        let mut out = Matrix::zeros(rows, total);
        let mut offset = 0;
        for part in parts {
            if part.rows != rows {
                return Err(Error::dim("hstack", (rows, total), part.shape()));
            }
            for c in 0..part.cols {
                out.copy_column_from(offset + c, part, c);
            }
            offset += part.cols;
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn scale_in_place(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x = *x * s);
    }

    pub fn add_assign(&mut self, other: &Matrix<T>) -> Result<()> {
        self.check_same("add_assign", other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: T, other: &Matrix<T>) -> Result<()> {
        self.check_same("axpy", other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * b;
        }
        Ok(())
    }

    /// Adds the `rows x 1` column `bias` to every column of `self`.
    pub fn add_column_broadcast(&mut self, bias: &Matrix<T>) -> Result<()> {
        if bias.cols != 1 || bias.rows != self.rows {
            return Err(Error::dim("add_column_broadcast", self.shape(), bias.shape()));
        }
        for r in 0..self.rows {
            let b = bias.data[r];
            for x in self.row_mut(r) {
                *x = *x + b;
            }
        }
        Ok(())
    }

    /// Accumulates the sum of each row into the `rows x 1` column `acc`.
    pub fn accumulate_row_sums(&self, acc: &mut Matrix<T>) -> Result<()> {
        if acc.cols != 1 || acc.rows != self.rows {
            return Err(Error::dim("accumulate_row_sums", self.shape(), acc.shape()));
        }
        for r in 0..self.rows {
            let mut s = acc.data[r];
            for &x in self.row(r) {
                s = s + x;
            }
            acc.data[r] = s;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// Converts to another precision, rounding where needed.
    pub fn convert<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::cast(x.as_f64())).collect(),
        }
    }

    fn check_same(&self, op: &'static str, other: &Matrix<T>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(op, self.shape(), other.shape()));
        }
        Ok(())
    }
}

/// A fixed, ordered collection of parameter tensors. The order returned by
/// [`Parameters::tensors`] is the canonical order used by checkpoints,
/// gradient clipping and the optimiser.
pub trait Parameters<T: Real> {
    fn tensors(&self) -> Vec<&Matrix<T>>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl<T: Real> Parameters<T> for Vec<Matrix<T>> {
    fn tensors(&self) -> Vec<&Matrix<T>> {
        self.iter().collect()
    }
    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        self.iter_mut().collect()
    }
}

/// Standard product `a * b`.
pub fn matmul<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    matmul_into(&mut out, a, b);
    Ok(out)
}

/// `aᵀ * b` without materialising the transpose.
pub fn matmul_tn<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows != b.rows {
        return Err(Error::dim("matmul_tn", a.shape(), b.shape()));
    }
    let n = b.cols;
    let mut out = Matrix::zeros(a.cols, n);
    for i in 0..a.rows {
        let b_row = &b.data[i * n..(i + 1) * n];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            let out_row = &mut out.data[k * n..(k + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + aik * bv;
            }
        }
    }
    Ok(out)
}

/// `acc += a * b`.
pub fn add_matmul<T: Real>(acc: &mut Matrix<T>, a: &Matrix<T>, b: &Matrix<T>) -> Result<()> {
    if a.cols != b.rows || acc.rows != a.rows || acc.cols != b.cols {
        return Err(Error::dim("add_matmul", a.shape(), b.shape()));
    }
    matmul_into(acc, a, b);
    Ok(())
}

/// `acc += a * bᵀ`. Each entry accumulates over the shared column index in order.
pub fn add_matmul_nt<T: Real>(acc: &mut Matrix<T>, a: &Matrix<T>, b: &Matrix<T>) -> Result<()> {
    if a.cols != b.cols || acc.rows != a.rows || acc.cols != b.rows {
        return Err(Error::dim("add_matmul_nt", a.shape(), b.shape()));
    }
    let bt = b.transpose();
    matmul_into(acc, a, &bt);
    Ok(())
}

/// `out += a * b`, i-k-j loop so the innermost loop runs over contiguous memory.
fn matmul_into<T: Real>(out: &mut Matrix<T>, a: &Matrix<T>, b: &Matrix<T>) {
    let n = b.cols;
    for i in 0..a.rows {
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            let b_row = &b.data[k * n..(k + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + aik * bv;
            }
        }
    }
}

/// Logistic function, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Sigmoid,
    Tanh,
    Add,
    Mul,
}

/// Applies a unary (one operand) or binary (two equally shaped operands) map.
pub fn elementwise<T: Real>(kind: Elementwise, operands: &[&Matrix<T>]) -> Result<Matrix<T>> {
    match (kind, operands) {
        (Elementwise::Sigmoid, [x]) => Ok(x.map(sigmoid)),
        (Elementwise::Tanh, [x]) => Ok(x.map(T::tanh)),
        (Elementwise::Add | Elementwise::Mul, [a, b]) => {
            a.check_same("elementwise", b)?;
            let op = |x: T, y: T| if kind == Elementwise::Add { x + y } else { x * y };
            Ok(Matrix {
                rows: a.rows,
                cols: a.cols,
                data: a.data.iter().zip(&b.data).map(|(&x, &y)| op(x, y)).collect(),
            })
        }
        _ => Err(Error::Input(alloc::format!(
            "{kind:?} takes {} operand(s), got {}",
            if matches!(kind, Elementwise::Sigmoid | Elementwise::Tanh) { 1 } else { 2 },
            operands.len()
        ))),
    }
}

/// In-place log-softmax of one row with max subtraction.
pub fn log_softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut sum = T::zero();
    for &x in row.iter() {
        sum = sum + (x - max).exp();
    }
    let log_sum = sum.ln();
    for x in row.iter_mut() {
        *x = (*x - max) - log_sum;
    }
}

pub fn log_softmax_rows<T: Real>(logits: &Matrix<T>) -> Result<Matrix<T>> {
    if logits.cols == 0 {
        return Err(Error::dim("log_softmax_rows", logits.shape(), (logits.rows, 1)));
    }
    let mut out = logits.clone();
    for r in 0..out.rows {
        log_softmax_in_place(out.row_mut(r));
    }
    Ok(out)
}

/// Euclidean norm of all entries of all tensors taken as one vector.
pub fn global_norm<'a, T: Real>(tensors: impl IntoIterator<Item = &'a Matrix<T>>) -> T {
    let mut sum = T::zero();
    for t in tensors {
        for &x in &t.data {
            sum = sum + x * x;
        }
    }
    sum.sqrt()
}
