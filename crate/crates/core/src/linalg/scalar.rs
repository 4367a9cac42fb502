use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

use super::Storage;

/// Element type of a [`super::DenseMatrix`] buffer.
///
/// Every kernel in this crate is written once against this trait, so an
/// `f32` matrix is computed in genuine single precision end to end.
pub(crate) trait Real: Float + Sum + Debug + Send + Sync + 'static {
    fn of(x: f64) -> Self;
    fn widen(self) -> f64;
    fn wrap(data: Vec<Self>) -> Storage;

    /// `c <- alpha * op(a) * op(b) + beta * c` on strided row-major views.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );
}

impl Real for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn widen(self) -> f64 {
        self as f64
    }
    fn wrap(data: Vec<Self>) -> Storage {
        Storage::F32(data)
    }
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    ) {
        assert!(c.len() >= m * n);
        // SAFETY: callers pass buffers whose lengths match the (m, k, n)
        // extents under the given strides; `c` is row-major m x n.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn widen(self) -> f64 {
        self
    }
    fn wrap(data: Vec<Self>) -> Storage {
        Storage::F64(data)
    }
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    ) {
        assert!(c.len() >= m * n);
        // SAFETY: see the f32 impl.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

/// Overflow-safe Euclidean norm of a slice (scaled sum of squares).
pub(crate) fn scaled_norm<T: Real>(x: &[T]) -> T {
    let mut scale = T::zero();
    let mut ssq = T::one();
    for &v in x {
        if v != T::zero() {
            let a = v.abs();
            if scale < a {
                let r = scale / a;
                ssq = T::one() + ssq * r * r;
                scale = a;
            } else {
                let r = a / scale;
                ssq = ssq + r * r;
            }
        }
    }
    scale * ssq.sqrt()
}
