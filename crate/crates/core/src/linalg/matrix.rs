use serde::{Deserialize, Serialize};

use super::scalar::{scaled_norm, Real};
use crate::error::{Error, Result};

/// Element precision of a [`DenseMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    /// Unit round-off of the element type.
    pub fn epsilon(self) -> f64 {
        match self {
            Precision::F32 => f32::EPSILON as f64,
            Precision::F64 => f64::EPSILON,
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::Argument(format!("unknown precision `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Storage {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

/// Runs `$body` with `$d` bound to the typed buffer of `$m`.
macro_rules! with_data {
    ($m:expr, |$d:ident| $body:expr) => {
        match &$m.data {
            $crate::linalg::Storage::F32($d) => $body,
            $crate::linalg::Storage::F64($d) => $body,
        }
    };
}

/// Runs `$body` with both typed buffers, failing on a precision mismatch.
macro_rules! with_pair {
    ($a:expr, $b:expr, |$x:ident, $y:ident| $body:expr) => {
        match (&$a.data, &$b.data) {
            ($crate::linalg::Storage::F32($x), $crate::linalg::Storage::F32($y)) => $body,
            ($crate::linalg::Storage::F64($x), $crate::linalg::Storage::F64($y)) => $body,
            _ => {
                return Err($crate::error::Error::PrecisionMismatch {
                    left: $a.precision(),
                    right: $b.precision(),
                })
            }
        }
    };
}

pub(crate) use with_data;

/// Row-major dense real matrix carrying its element precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MatrixRepr", try_from = "MatrixRepr")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    pub(crate) data: Storage,
}

/// Serialised form: shape, precision and row-major values.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    precision: Precision,
    data: Vec<f64>,
}

impl From<DenseMatrix> for MatrixRepr {
    fn from(m: DenseMatrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            precision: m.precision(),
            data: m.to_vec(),
        }
    }
}

impl TryFrom<MatrixRepr> for DenseMatrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        DenseMatrix::from_vec(r.rows, r.cols, r.data, r.precision)
    }
}

impl DenseMatrix {
    pub(crate) fn from_typed<T: Real>(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        DenseMatrix {
            rows,
            cols,
            data: T::wrap(data),
        }
    }

    pub fn zeros(rows: usize, cols: usize, precision: Precision) -> Self {
        match precision {
            Precision::F32 => Self::from_typed(rows, cols, vec![0f32; rows * cols]),
            Precision::F64 => Self::from_typed(rows, cols, vec![0f64; rows * cols]),
        }
    }

    pub fn identity(n: usize, precision: Precision) -> Self {
        let mut m = Self::zeros(n, n, precision);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from row-major `f64` values, rounding to `precision`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>, precision: Precision) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("DenseMatrix::from_vec"));
        }
        Ok(match precision {
            Precision::F32 => Self::from_typed(rows, cols, data.iter().map(|&v| v as f32).collect()),
            Precision::F64 => Self::from_typed(rows, cols, data),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], precision: Precision) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("ragged rows"));
        }
        Self::from_vec(r, c, rows.concat(), precision)
    }

    pub fn from_diag(diag: &[f64], precision: Precision) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n, precision);
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn precision(&self) -> Precision {
        match self.data {
            Storage::F32(_) => Precision::F32,
            Storage::F64(_) => Precision::F64,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        let k = i * self.cols + j;
        with_data!(self, |d| d[k].widen())
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        let k = i * self.cols + j;
        match &mut self.data {
            Storage::F32(d) => d[k] = value as f32,
            Storage::F64(d) => d[k] = value,
        }
    }

    /// Row-major copy of the entries, widened to `f64`.
    pub fn to_vec(&self) -> Vec<f64> {
        with_data!(self, |d| d.iter().map(|v| v.widen()).collect())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.to_vec().chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub(crate) fn typed<T: Real>(&self) -> &[T] {
        let any: &dyn std::any::Any = match &self.data {
            Storage::F32(d) => d,
            Storage::F64(d) => d,
        };
        any.downcast_ref::<Vec<T>>()
            .expect("typed view requested with the wrong element type")
    }

    pub fn with_precision(&self, precision: Precision) -> Self {
        if precision == self.precision() {
            return self.clone();
        }
        Self::from_vec(self.rows, self.cols, self.to_vec(), precision)
            .expect("finite entries convert to finite entries")
    }

    pub fn is_finite(&self) -> bool {
        with_data!(self, |d| d.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn check_finite(self, what: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn transpose(&self) -> Self {
        fn go<T: Real>(r: usize, c: usize, d: &[T]) -> DenseMatrix {
            let mut out = Vec::with_capacity(r * c);
            for j in 0..c {
                for i in 0..r {
                    out.push(d[i * c + j]);
                }
            }
            DenseMatrix::from_typed(c, r, out)
        }
        with_data!(self, |d| go(self.rows, self.cols, d))
    }

    fn gemm_op(&self, ta: bool, other: &Self, tb: bool) -> Result<Self> {
        let (m, k) = if ta { (self.cols, self.rows) } else { (self.rows, self.cols) };
        let (k2, n) = if tb { (other.cols, other.rows) } else { (other.rows, other.cols) };
        if k != k2 {
            return Err(Error::shape(format!(
                "cannot multiply {m}x{k} by {k2}x{n}"
            )));
        }
        fn go<T: Real>(
            a: &[T],
            acols: usize,
            ta: bool,
            b: &[T],
            bcols: usize,
            tb: bool,
            (m, k, n): (usize, usize, usize),
        ) -> DenseMatrix {
            let mut c = vec![T::zero(); m * n];
            let (rsa, csa) = if ta { (1, acols as isize) } else { (acols as isize, 1) };
            let (rsb, csb) = if tb { (1, bcols as isize) } else { (bcols as isize, 1) };
            if m > 0 && n > 0 && k > 0 {
                T::gemm(m, k, n, T::one(), a, rsa, csa, b, rsb, csb, T::zero(), &mut c);
            }
            DenseMatrix::from_typed(m, n, c)
        }
        let out = with_pair!(self, other, |a, b| go(a, self.cols, ta, b, other.cols, tb, (m, k, n)));
        out.check_finite("matmul")
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.gemm_op(false, other, false)
    }

    /// `selfᵀ * other`.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        self.gemm_op(true, other, false)
    }

    /// `self * otherᵀ`.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        self.gemm_op(false, other, true)
    }

    fn zip_with(&self, other: &Self, what: &'static str, f: fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        fn go<T: Real>(r: usize, c: usize, a: &[T], b: &[T], f: fn(f64, f64) -> f64) -> DenseMatrix {
            // Each element is rounded back to T immediately.
            let out = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| T::of(f(x.widen(), y.widen())))
                .collect();
            DenseMatrix::from_typed(r, c, out)
        }
        let out = with_pair!(self, other, |a, b| go(self.rows, self.cols, a, b, f));
        out.check_finite(what)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpby(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpby(1.0, other, -1.0)
    }

    /// `alpha * self + beta * other`, evaluated in the matrix precision.
    pub fn axpby(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "axpby: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        fn go<T: Real>(r: usize, c: usize, a: &[T], b: &[T], alpha: T, beta: T) -> DenseMatrix {
            let out = a.iter().zip(b).map(|(&x, &y)| alpha * x + beta * y).collect();
            DenseMatrix::from_typed(r, c, out)
        }
        let out = with_pair!(self, other, |a, b| go(
            self.rows,
            self.cols,
            a,
            b,
            Real::of(alpha),
            Real::of(beta)
        ));
        out.check_finite("axpby")
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "hadamard", |x, y| x * y)
    }

    pub fn scale(&self, s: f64) -> Self {
        fn go<T: Real>(r: usize, c: usize, d: &[T], s: T) -> DenseMatrix {
            DenseMatrix::from_typed(r, c, d.iter().map(|&v| v * s).collect())
        }
        with_data!(self, |d| go(self.rows, self.cols, d, Real::of(s)))
    }

    /// In-place `diag += s`.
    pub fn add_diag(&mut self, s: f64) {
        let (n, c) = (self.rows.min(self.cols), self.cols);
        match &mut self.data {
            Storage::F32(d) => (0..n).for_each(|i| d[i * c + i] += s as f32),
            Storage::F64(d) => (0..n).for_each(|i| d[i * c + i] += s),
        }
    }

    /// `(A + Aᵀ) / 2`. Panics on non-square input.
    pub fn symmetrize(&self) -> Self {
        assert!(self.is_square(), "symmetrize needs a square matrix");
        fn go<T: Real>(n: usize, d: &[T]) -> DenseMatrix {
            let half = T::of(0.5);
            let mut out = d.to_vec();
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = half * (d[i * n + j] + d[j * n + i]);
                    out[i * n + j] = v;
                    out[j * n + i] = v;
                }
            }
            DenseMatrix::from_typed(n, n, out)
        }
        with_data!(self, |d| go(self.rows, d))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let n = self.rows;
        let scale = self.max_abs().max(1.0);
        (0..n).all(|i| ((i + 1)..n).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol * scale))
    }

    pub fn trace(&self) -> f64 {
        fn go<T: Real>(r: usize, c: usize, d: &[T]) -> f64 {
            let mut s = T::zero();
            for i in 0..r.min(c) {
                s = s + d[i * c + i];
            }
            s.widen()
        }
        with_data!(self, |d| go(self.rows, self.cols, d))
    }

    pub fn max_abs(&self) -> f64 {
        with_data!(self, |d| d.iter().fold(0f64, |m, v| m.max(v.abs().widen())))
    }

    /// Frobenius inner product `tr(selfᵀ other)`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::shape("dot: shapes differ"));
        }
        fn go<T: Real>(a: &[T], b: &[T]) -> f64 {
            a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y).widen()
        }
        Ok(with_pair!(self, other, |a, b| go(a, b)))
    }

    /// Frobenius norm, computed without intermediate overflow.
    pub fn frob_norm(&self) -> f64 {
        with_data!(self, |d| scaled_norm(d).widen())
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    /// Copy of the contiguous block `rows x cols` starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "block out of range");
        fn go<T: Real>(d: &[T], stride: usize, r0: usize, c0: usize, rows: usize, cols: usize) -> DenseMatrix {
            let mut out = Vec::with_capacity(rows * cols);
            for i in r0..r0 + rows {
                out.extend_from_slice(&d[i * stride + c0..i * stride + c0 + cols]);
            }
            DenseMatrix::from_typed(rows, cols, out)
        }
        with_data!(self, |d| go(d, self.cols, r0, c0, rows, cols))
    }

    /// Writes `src` into the block starting at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, src: &Self) -> Result<()> {
        if r0 + src.rows > self.rows || c0 + src.cols > self.cols {
            return Err(Error::shape("set_block: block out of range"));
        }
        if src.precision() != self.precision() {
            return Err(Error::PrecisionMismatch {
                left: self.precision(),
                right: src.precision(),
            });
        }
        let stride = self.cols;
        match (&mut self.data, &src.data) {
            (Storage::F32(d), Storage::F32(s)) => copy_block(d, stride, s, src.cols, r0, c0),
            (Storage::F64(d), Storage::F64(s)) => copy_block(d, stride, s, src.cols, r0, c0),
            _ => unreachable!("precision checked above"),
        }
        Ok(())
    }

    /// Largest absolute elementwise difference, for tests and diagnostics.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .fold(0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn copy_block<T: Copy>(dst: &mut [T], stride: usize, src: &[T], scols: usize, r0: usize, c0: usize) {
    for (i, row) in src.chunks(scols.max(1)).enumerate() {
        let start = (r0 + i) * stride + c0;
        dst[start..start + row.len()].copy_from_slice(row);
    }
}
