use super::eig::{sym_eig, SymEig};
use super::matrix::DenseMatrix;
use super::scalar::Real;
use super::Precision;
use crate::error::{Error, Result};

/// Guard on the number of entries [`kron`] will materialise.
pub const KRON_MAX_ENTRIES: usize = 1_000_000;

pub fn frob_norm(a: &DenseMatrix) -> f64 {
    a.frob_norm()
}

/// Largest singular value. Symmetric inputs use their own spectrum,
/// everything else goes through `AᵀA`.
pub fn spec_norm(a: &DenseMatrix) -> Result<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(0.0);
    }
    if a.is_square() && a.is_symmetric(0.0) {
        let e = sym_eig(a)?;
        let lo = e.eigenvalues.first().copied().unwrap_or(0.0).abs();
        let hi = e.eigenvalues.last().copied().unwrap_or(0.0).abs();
        return Ok(lo.max(hi));
    }
    // Scale first so AᵀA cannot overflow.
    let s = a.max_abs();
    if s == 0.0 {
        return Ok(0.0);
    }
    let u = a.scale(1.0 / s);
    let gram = u.t_matmul(&u)?;
    let top = sym_eig(&gram)?.eigenvalues.last().copied().unwrap_or(0.0);
    Ok(top.max(0.0).sqrt() * s)
}

/// Standard Kronecker product `A ⊗ B`: block `(i, j)` is `a_ij · B`.
///
/// The notation `R ⊗ L` used for Kronecker-factored preconditioners maps to
/// `kron(R, L)` here, so `kron(R, L) · vec(G) = vec(L · G · R)` for symmetric `R`.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let (m, n) = a.shape();
    let (q, r) = b.shape();
    let entries = (m * q).saturating_mul(n * r);
    if entries > KRON_MAX_ENTRIES {
        return Err(Error::Capacity(format!(
            "kron would produce {entries} entries (limit {KRON_MAX_ENTRIES})"
        )));
    }
    if a.precision() != b.precision() {
        return Err(Error::PrecisionMismatch {
            left: a.precision(),
            right: b.precision(),
        });
    }
    fn go<T: Real>(a: &[T], b: &[T], (m, n, q, r): (usize, usize, usize, usize)) -> DenseMatrix {
        let cols = n * r;
        let mut out = vec![T::zero(); m * q * cols];
        for i in 0..m {
            for j in 0..n {
                let aij = a[i * n + j];
                for k in 0..q {
                    for l in 0..r {
                        out[(i * q + k) * cols + j * r + l] = aij * b[k * r + l];
                    }
                }
            }
        }
        DenseMatrix::from_typed(m * q, cols, out)
    }
    let out = match a.precision() {
        Precision::F32 => go(a.typed::<f32>(), b.typed::<f32>(), (m, n, q, r)),
        Precision::F64 => go(a.typed::<f64>(), b.typed::<f64>(), (m, n, q, r)),
    };
    out.check_finite("kron")
}

/// Column-stacking vectorisation.
pub fn vec(a: &DenseMatrix) -> Vec<f64> {
    let (m, n) = a.shape();
    let mut out = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            out.push(a.get(i, j));
        }
    }
    out
}

/// Inverse of [`vec`] for an `m x n` target.
pub fn unvec(values: &[f64], m: usize, n: usize, precision: Precision) -> Result<DenseMatrix> {
    if values.len() != m * n {
        return Err(Error::shape(format!(
            "unvec of {} values into {m}x{n}",
            values.len()
        )));
    }
    let mut row_major = vec![0.0; m * n];
    for j in 0..n {
        for i in 0..m {
            row_major[i * n + j] = values[j * m + i];
        }
    }
    DenseMatrix::from_vec(m, n, row_major, precision)
}

/// Column vector (`len x 1`) from values.
pub fn column(values: &[f64], precision: Precision) -> Result<DenseMatrix> {
    DenseMatrix::from_vec(values.len(), 1, values.to_vec(), precision)
}

/// Relative tolerance below which negative eigenvalues are treated as
/// round-off and clamped to zero.
pub fn psd_clamp_tol(precision: Precision) -> f64 {
    match precision {
        Precision::F64 => 1e-10,
        Precision::F32 => 1e-5,
    }
}

/// Clamps round-off negatives of a PSD spectrum, rejecting genuine negatives.
pub(crate) fn clamp_psd(eig: &SymEig, precision: Precision) -> Result<Vec<f64>> {
    let top = eig
        .eigenvalues
        .iter()
        .fold(0f64, |m, v| m.max(v.abs()));
    let tol = psd_clamp_tol(precision) * top;
    eig.eigenvalues
        .iter()
        .map(|&l| {
            if l >= 0.0 {
                Ok(l)
            } else if l >= -tol {
                Ok(0.0)
            } else {
                Err(Error::Domain(format!(
                    "eigenvalue {l:e} is below the PSD tolerance -{tol:e}"
                )))
            }
        })
        .collect()
}

/// Applies `λ ↦ λ^r` to an already computed decomposition of a PSD matrix.
pub fn power_from_eig(eig: &SymEig, r: f64) -> Result<DenseMatrix> {
    let precision = eig.eigenvectors.precision();
    let clamped = clamp_psd(eig, precision)?;
    if r < 0.0 && clamped.iter().any(|&l| l == 0.0) {
        return Err(Error::Singular(format!(
            "negative power {r} of a matrix with a zero eigenvalue"
        )));
    }
    let eig = SymEig {
        eigenvalues: clamped,
        eigenvectors: eig.eigenvectors.clone(),
    };
    if r == 0.0 {
        return Ok(DenseMatrix::identity(eig.eigenvalues.len(), precision));
    }
    // Evaluate the scalar power in the matrix precision.
    match precision {
        Precision::F32 => eig.reconstruct_with(|l| (l as f32).powf(r as f32) as f64),
        Precision::F64 => eig.reconstruct_with(|l| l.powf(r)),
    }
}

/// `A^r = V · Λ^r · Vᵀ` for PSD `A`.
pub fn mat_power_psd(a: &DenseMatrix, r: f64) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::shape("matrix power of a non-square matrix"));
    }
    power_from_eig(&sym_eig(a)?, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows, Precision::F64).unwrap()
    }

    #[test]
    fn norms_of_small_matrices() {
        assert_eq!(frob_norm(&m(&[vec![3.0, 4.0], vec![0.0, 0.0]])), 5.0);
        let i3 = DenseMatrix::identity(3, Precision::F64);
        assert!((frob_norm(&i3) - 3f64.sqrt()).abs() < 1e-15);
        assert!((spec_norm(&i3).unwrap() - 1.0).abs() < 1e-15);
        let d = DenseMatrix::from_diag(&[2.0, -5.0], Precision::F64);
        assert!((spec_norm(&d).unwrap() - 5.0).abs() < 1e-14);
        let rect = m(&[vec![3.0, 4.0]]);
        assert!((spec_norm(&rect).unwrap() - 5.0).abs() < 1e-13);
    }

    #[test]
    fn kron_of_identities_and_diagonals() {
        let i2 = DenseMatrix::identity(2, Precision::F64);
        let i3 = DenseMatrix::identity(3, Precision::F64);
        assert_eq!(kron(&i2, &i3).unwrap(), DenseMatrix::identity(6, Precision::F64));
        let d = kron(
            &DenseMatrix::from_diag(&[1.0, 2.0], Precision::F64),
            &DenseMatrix::from_diag(&[3.0], Precision::F64),
        )
        .unwrap();
        assert_eq!(d, DenseMatrix::from_diag(&[3.0, 6.0], Precision::F64));
    }

    #[test]
    fn kron_capacity_guard() {
        let a = DenseMatrix::zeros(1001, 1, Precision::F64);
        let b = DenseMatrix::zeros(1000, 1, Precision::F64);
        // 1001*1000 x 1 is just over the limit.
        assert!(matches!(kron(&a, &b), Err(Error::Capacity(_))));
    }

    #[test]
    fn vec_stacks_columns() {
        let a = m(&[vec![1.0, 3.0], vec![2.0, 4.0]]);
        assert_eq!(vec(&a), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(unvec(&[1.0; 3], 2, 2, Precision::F64), Err(Error::Shape(_))));
    }

    #[test]
    fn powers_of_diagonal_matrices() {
        let a = DenseMatrix::from_diag(&[4.0, 9.0], Precision::F64);
        let r = mat_power_psd(&a, 0.5).unwrap();
        assert!(r.max_abs_diff(&DenseMatrix::from_diag(&[2.0, 3.0], Precision::F64)) < 1e-14);
        let i = DenseMatrix::identity(3, Precision::F64);
        assert!(mat_power_psd(&i, -0.37).unwrap().max_abs_diff(&i) < 1e-15);
        let s = DenseMatrix::from_diag(&[16.0], Precision::F64);
        assert!((mat_power_psd(&s, -0.25).unwrap().get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn power_domain_and_singularity_errors() {
        let neg = DenseMatrix::from_diag(&[1.0, -0.5], Precision::F64);
        assert!(matches!(mat_power_psd(&neg, 0.5), Err(Error::Domain(_))));
        let sing = DenseMatrix::from_diag(&[1.0, 0.0], Precision::F64);
        assert!(matches!(mat_power_psd(&sing, -0.5), Err(Error::Singular(_))));
        // Round-off negatives are clamped.
        let tiny = DenseMatrix::from_diag(&[1.0, -1e-13], Precision::F64);
        assert_eq!(mat_power_psd(&tiny, 0.5).unwrap().get(1, 1), 0.0);
    }
}
