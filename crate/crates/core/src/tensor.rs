//! Dense tensors of order up to [`MAX_ORDER`] with tensordot-style contraction.
//!
//! Dimension indices in this API are 1-based; element indices are 0-based.

use crate::error::{Error, Result};
use crate::linalg::scalar::Real;
use crate::linalg::{with_data, DenseMatrix, Precision, Storage};

pub const MAX_ORDER: usize = 6;

/// Row-major (last index fastest) dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    pub(crate) data: Storage,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_ORDER {
        return Err(Error::Argument(format!(
            "tensor order must be between 1 and {MAX_ORDER}, got {}",
            shape.len()
        )));
    }
    Ok(shape.iter().product())
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

/// Moves axis `perm[k]` of the input to position `k` of the output.
fn permute_typed<T: Real>(data: &[T], shape: &[usize], perm: &[usize]) -> Vec<T> {
    let src = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let step: Vec<usize> = perm.iter().map(|&p| src[p]).collect();
    let total: usize = out_shape.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; perm.len()];
    let mut offset = 0usize;
    for _ in 0..total {
        out.push(data[offset]);
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            offset += step[k];
            if idx[k] < out_shape[k] {
                break;
            }
            offset -= step[k] * out_shape[k];
            idx[k] = 0;
        }
    }
    out
}

impl DenseTensor {
    pub fn new(shape: &[usize], data: Vec<f64>, precision: Precision) -> Result<Self> {
        let len = check_shape(shape)?;
        if data.len() != len {
            return Err(Error::shape(format!(
                "{} values for a tensor of shape {shape:?}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("DenseTensor::new"));
        }
        let data = match precision {
            Precision::F32 => Storage::F32(data.into_iter().map(|v| v as f32).collect()),
            Precision::F64 => Storage::F64(data),
        };
        Ok(DenseTensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize], precision: Precision) -> Result<Self> {
        let len = check_shape(shape)?;
        Self::new(shape, vec![0.0; len], precision)
    }

    /// An `m x n` matrix as an order-2 tensor.
    pub fn from_matrix(m: &DenseMatrix) -> Self {
        DenseTensor {
            shape: vec![m.rows(), m.cols()],
            data: m.data.clone(),
        }
    }

    /// The order-2 tensor as a matrix.
    pub fn to_matrix(&self) -> Result<DenseMatrix> {
        if self.shape.len() != 2 {
            return Err(Error::shape(format!(
                "order-{} tensor is not a matrix",
                self.shape.len()
            )));
        }
        Ok(self.reshape_matrix(self.shape[0], self.shape[1]))
    }

    fn reshape_matrix(&self, rows: usize, cols: usize) -> DenseMatrix {
        with_data!(self, |d| DenseMatrix::from_typed(rows, cols, d.clone()))
    }

    fn from_storage(shape: Vec<usize>, data: Storage) -> Self {
        DenseTensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn precision(&self) -> Precision {
        match self.data {
            Storage::F32(_) => Precision::F32,
            Storage::F64(_) => Precision::F64,
        }
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len(), "index order");
        let s = strides(&self.shape);
        let off: usize = index
            .iter()
            .zip(&self.shape)
            .zip(&s)
            .map(|((&i, &n), &st)| {
                assert!(i < n, "index {i} out of range {n}");
                i * st
            })
            .sum();
        with_data!(self, |d| d[off].widen())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        with_data!(self, |d| d.iter().map(|v| v.widen()).collect())
    }

    pub fn frob_norm(&self) -> f64 {
        self.reshape_matrix(1, self.len()).frob_norm()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "shape");
        self.reshape_matrix(1, self.len())
            .max_abs_diff(&other.reshape_matrix(1, other.len()))
    }

    /// Axis permutation with 0-based axes.
    fn permute0(&self, perm: &[usize]) -> Self {
        let shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let data = match &self.data {
            Storage::F32(d) => Storage::F32(permute_typed(d, &self.shape, perm)),
            Storage::F64(d) => Storage::F64(permute_typed(d, &self.shape, perm)),
        };
        Self::from_storage(shape, data)
    }

    /// Axis permutation; `perm` lists 1-based source dimensions.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let zero = to_zero_based(perm, self.order())?;
        if zero.len() != self.order() {
            return Err(Error::Argument(format!(
                "permutation of length {} for an order-{} tensor",
                zero.len(),
                self.order()
            )));
        }
        Ok(self.permute0(&zero))
    }

    /// Mode-`d` unfolding: an `n_d x (Π_{e≠d} n_e)` matrix whose columns run
    /// over the remaining dimensions in order.
    pub fn unfold(&self, d: usize) -> Result<DenseMatrix> {
        let d0 = to_zero_based(&[d], self.order())?[0];
        let mut perm = vec![d0];
        perm.extend((0..self.order()).filter(|&e| e != d0));
        let p = self.permute0(&perm);
        let rows = self.shape[d0];
        Ok(p.reshape_matrix(rows, self.len() / rows.max(1)))
    }
}

fn to_zero_based(dims: &[usize], order: usize) -> Result<Vec<usize>> {
    let mut seen = [false; MAX_ORDER];
    dims.iter()
        .map(|&d| {
            if d == 0 || d > order {
                return Err(Error::Argument(format!(
                    "dimension {d} out of range 1..={order}"
                )));
            }
            if seen[d - 1] {
                return Err(Error::Argument(format!("dimension {d} repeated")));
            }
            seen[d - 1] = true;
            Ok(d - 1)
        })
        .collect()
}

/// `TD(A, B, dims_a, dims_b)`: sums over paired dimensions `dims_a[k]` of `A`
/// and `dims_b[k]` of `B`. The output carries the free dimensions of `A`
/// followed by those of `B`; a full contraction yields shape `[1]`.
pub fn tensordot(
    a: &DenseTensor,
    b: &DenseTensor,
    dims_a: &[usize],
    dims_b: &[usize],
) -> Result<DenseTensor> {
    if dims_a.len() != dims_b.len() {
        return Err(Error::shape(format!(
            "tensordot pairs {} dimensions with {}",
            dims_a.len(),
            dims_b.len()
        )));
    }
    if a.precision() != b.precision() {
        return Err(Error::PrecisionMismatch {
            left: a.precision(),
            right: b.precision(),
        });
    }
    let ca = to_zero_based(dims_a, a.order())?;
    let cb = to_zero_based(dims_b, b.order())?;
    for (&i, &j) in ca.iter().zip(&cb) {
        if a.shape[i] != b.shape[j] {
            return Err(Error::shape(format!(
                "tensordot extent {} (dim {} of A) vs {} (dim {} of B)",
                a.shape[i],
                i + 1,
                b.shape[j],
                j + 1
            )));
        }
    }
    let free_a: Vec<usize> = (0..a.order()).filter(|d| !ca.contains(d)).collect();
    let free_b: Vec<usize> = (0..b.order()).filter(|d| !cb.contains(d)).collect();
    let mut out_shape: Vec<usize> = free_a.iter().map(|&d| a.shape[d]).collect();
    out_shape.extend(free_b.iter().map(|&d| b.shape[d]));
    if out_shape.len() > MAX_ORDER {
        return Err(Error::Argument(format!(
            "tensordot result would have order {}",
            out_shape.len()
        )));
    }
    let k: usize = ca.iter().map(|&d| a.shape[d]).product();
    let fa: usize = free_a.iter().map(|&d| a.shape[d]).product();
    let fb: usize = free_b.iter().map(|&d| b.shape[d]).product();

    let perm_a: Vec<usize> = free_a.iter().chain(&ca).copied().collect();
    let perm_b: Vec<usize> = cb.iter().chain(&free_b).copied().collect();
    let ma = a.permute0(&perm_a).reshape_matrix(fa, k);
    let mb = b.permute0(&perm_b).reshape_matrix(k, fb);
    let prod = if k == 0 {
        DenseMatrix::zeros(fa, fb, a.precision())
    } else {
        ma.matmul(&mb)?
    };
    if out_shape.is_empty() {
        out_shape.push(1);
    }
    Ok(DenseTensor::from_storage(out_shape, prod.data))
}

/// `contr_d(A) = TD(A, A, D∖d, D∖d)`, the `n_d x n_d` Gram matrix of the
/// mode-`d` fibres.
pub fn contract_dim(a: &DenseTensor, d: usize) -> Result<DenseMatrix> {
    let d0 = to_zero_based(&[d], a.order())?[0];
    let rest: Vec<usize> = (1..=a.order()).filter(|&e| e != d0 + 1).collect();
    let t = tensordot(a, a, &rest, &rest)?;
    let n = a.shape[d0];
    Ok(t.reshape_matrix(n, n).symmetrize())
}

/// `A ×_d L`: applies `L` along dimension `d`, which keeps its position and
/// takes the row count of `L`.
///
/// Equal to `TD(L, A, [2], [d])` with the leading axis moved to position `d`.
pub fn tensor_matrix_product(a: &DenseTensor, l: &DenseMatrix, d: usize) -> Result<DenseTensor> {
    let d0 = to_zero_based(&[d], a.order())?[0];
    if l.cols() != a.shape[d0] {
        return Err(Error::shape(format!(
            "{}x{} matrix applied to dimension {d} of extent {}",
            l.rows(),
            l.cols(),
            a.shape[d0]
        )));
    }
    let lt = DenseTensor::from_matrix(l);
    let t = tensordot(&lt, a, &[2], &[d])?;
    // t has axes (new_d, remaining dims of A in order).
    let mut perm: Vec<usize> = (1..t.order()).collect();
    perm.insert(d0, 0);
    Ok(t.permute0(&perm))
}
