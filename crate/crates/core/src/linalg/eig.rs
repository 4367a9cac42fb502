//! Symmetric eigendecomposition.
//!
//! Two independent routes are provided: cyclic Jacobi rotations (small
//! matrices, highest accuracy) and Householder tridiagonalisation followed by
//! implicit QL (larger matrices). Both run entirely in the element type of the
//! input, so an `f32` matrix is decomposed in single precision.

use super::matrix::{with_data, DenseMatrix};
use super::scalar::Real;
use crate::error::{Error, Result};

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigMethod {
    /// Jacobi up to [`JACOBI_MAX_DIM`], tridiagonal QL above.
    Auto,
    Jacobi,
    Tridiagonal,
}

/// Largest dimension routed to Jacobi by [`EigMethod::Auto`].
pub const JACOBI_MAX_DIM: usize = 24;

const MAX_SWEEPS: usize = 100;
const MAX_QL_ITERS: usize = 60;

impl SymEig {
    /// `V · diag(f(λ)) · Vᵀ`, evaluated in the eigenvector precision.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Result<DenseMatrix> {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for j in 0..n {
            let s = f(self.eigenvalues[j]);
            if !s.is_finite() {
                return Err(Error::NonFinite("SymEig::reconstruct_with"));
            }
            for i in 0..n {
                scaled.set(i, j, v.get(i, j) * s);
            }
        }
        let out = scaled.matmul_t(v)?;
        Ok(out.symmetrize())
    }

    pub fn reconstruct(&self) -> Result<DenseMatrix> {
        self.reconstruct_with(|x| x)
    }
}

/// Eigendecomposition of the symmetric part `(A + Aᵀ)/2`.
pub fn sym_eig(a: &DenseMatrix) -> Result<SymEig> {
    sym_eig_with(a, EigMethod::Auto)
}

pub fn sym_eig_with(a: &DenseMatrix, method: EigMethod) -> Result<SymEig> {
    if !a.is_square() {
        return Err(Error::shape(format!(
            "eigendecomposition of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("sym_eig input"));
    }
    let n = a.rows();
    let sym = a.symmetrize();
    let method = match method {
        EigMethod::Auto if n <= JACOBI_MAX_DIM => EigMethod::Jacobi,
        EigMethod::Auto => EigMethod::Tridiagonal,
        m => m,
    };
    with_data!(sym, |d| match method {
        EigMethod::Jacobi => jacobi(n, d),
        _ => tridiagonal_ql(n, d),
    })
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue(a: &DenseMatrix) -> Result<f64> {
    Ok(sym_eig(a)?
        .eigenvalues
        .first()
        .copied()
        .unwrap_or(f64::INFINITY))
}

fn finish<T: Real>(n: usize, mut vals: Vec<T>, vecs_t: Vec<T>) -> Result<SymEig> {
    // `vecs_t` holds eigenvectors as rows.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap_or(std::cmp::Ordering::Equal));
    let mut v = vec![T::zero(); n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            v[row * n + col] = vecs_t[src * n + row];
        }
    }
    let sorted: Vec<f64> = order.iter().map(|&i| vals[i].widen()).collect();
    vals.clear();
    let eigenvectors = DenseMatrix::from_typed(n, n, v).check_finite("sym_eig")?;
    if sorted.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("sym_eig eigenvalues"));
    }
    Ok(SymEig {
        eigenvalues: sorted,
        eigenvectors,
    })
}

fn off_norm<T: Real>(n: usize, a: &[T]) -> T {
    let mut s = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            s = s + a[i * n + j] * a[i * n + j];
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi with eigenvectors accumulated row-wise in `vt` (`Vᵀ`).
fn jacobi<T: Real>(n: usize, input: &[T]) -> Result<SymEig> {
    let mut a = input.to_vec();
    let mut vt = vec![T::zero(); n * n];
    for i in 0..n {
        vt[i * n + i] = T::one();
    }
    let scale = pow2_scale(super::scalar::scaled_norm(&a));
    if scale == T::zero() {
        return finish(n, vec![T::zero(); n], vt);
    }
    // Work on a roughly unit-norm copy so squares never overflow.
    for x in a.iter_mut() {
        *x = *x / scale;
    }
    let eps = T::epsilon();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_norm(n, &a) <= eps * T::of(0.5) {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                if apq.abs() <= eps * eps * (app.abs() + aqq.abs()) {
                    a[p * n + q] = T::zero();
                    a[q * n + p] = T::zero();
                    continue;
                }
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                rotate(n, &mut a, &mut vt, p, q, c, s);
            }
        }
    }
    if !converged {
        let residual = off_norm(n, &a).widen();
        if residual > 10.0 * eps.widen() {
            return Err(Error::NoConvergence {
                what: "jacobi eigendecomposition",
                residual,
            });
        }
    }
    let vals = (0..n).map(|i| a[i * n + i] * scale).collect();
    finish(n, vals, vt)
}

#[inline]
fn rotate<T: Real>(n: usize, a: &mut [T], vt: &mut [T], p: usize, q: usize, c: T, s: T) {
    // A <- Jᵀ A J with J = [[c, s], [-s, c]] acting on (p, q).
    for k in 0..n {
        let akp = a[k * n + p];
        let akq = a[k * n + q];
        a[k * n + p] = c * akp - s * akq;
        a[k * n + q] = s * akp + c * akq;
    }
    {
        let (lo, hi) = a.split_at_mut(q * n);
        let rp = &mut lo[p * n..p * n + n];
        let rq = &mut hi[..n];
        for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
            let (bp, bq) = (*x, *y);
            *x = c * bp - s * bq;
            *y = s * bp + c * bq;
        }
    }
    a[p * n + q] = T::zero();
    a[q * n + p] = T::zero();
    let (lo, hi) = vt.split_at_mut(q * n);
    let vp = &mut lo[p * n..p * n + n];
    let vq = &mut hi[..n];
    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
        let (bp, bq) = (*x, *y);
        *x = c * bp - s * bq;
        *y = s * bp + c * bq;
    }
}

/// Power of two near `norm`, so that scaling by it is exact.
fn pow2_scale<T: Real>(norm: T) -> T {
    if norm == T::zero() || !norm.is_finite() {
        return norm;
    }
    T::of(2f64.powi(norm.widen().log2().floor() as i32))
}

/// Householder reduction to tridiagonal form followed by implicit QL
/// (the classic `tred2`/`tql2` pair).
fn tridiagonal_ql<T: Real>(n: usize, input: &[T]) -> Result<SymEig> {
    if n == 0 {
        return finish::<T>(0, Vec::new(), Vec::new());
    }
    let scale = pow2_scale(super::scalar::scaled_norm(input));
    if scale == T::zero() {
        let mut vt = vec![T::zero(); n * n];
        for i in 0..n {
            vt[i * n + i] = T::one();
        }
        return finish(n, vec![T::zero(); n], vt);
    }
    let mut v: Vec<T> = input.iter().map(|&x| x / scale).collect();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(n, &mut v, &mut d, &mut e);
    // tql2 rotates columns of V; work on Vᵀ so rotations touch contiguous rows.
    let mut vt = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            vt[j * n + i] = v[i * n + j];
        }
    }
    tql2(n, &mut vt, &mut d, &mut e)?;
    let vals = d.into_iter().map(|x| x * scale).collect();
    finish(n, vals, vt)
}

fn tred2<T: Real>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) {
    let idx = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for k in 0..i {
            scale = scale + d[k].abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
                v[idx(j, i)] = T::zero();
            }
        } else {
            for k in 0..i {
                d[k] = d[k] / scale;
                h = h + d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g = g + v[idx(k, j)] * d[k];
                    e[k] = e[k] + v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] = v[idx(k, j)] - (f * e[k] + g * d[k]);
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }
    // Accumulate transformations.
    for i in 0..n - 1 {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g = g + v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] = v[idx(k, j)] - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = T::zero();
    }
    v[idx(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

fn tql2<T: Real>(n: usize, vt: &mut [T], d: &mut [T], e: &mut [T]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERS {
                    return Err(Error::NoConvergence {
                        what: "tridiagonal QL eigendecomposition",
                        residual: e[l].abs().widen(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (T::of(2.0) * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;
                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    // Rotate eigenvector rows i and i+1 of Vᵀ.
                    let (lo, hi) = vt.split_at_mut((i + 1) * n);
                    let ri = &mut lo[i * n..i * n + n];
                    let ri1 = &mut hi[..n];
                    for (x, y) in ri.iter_mut().zip(ri1.iter_mut()) {
                        let hv = *y;
                        *y = s * *x + c * hv;
                        *x = c * *x - s * hv;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = T::zero();
    }
    Ok(())
}
