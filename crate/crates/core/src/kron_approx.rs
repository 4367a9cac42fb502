//! Nearest Kronecker product `R ⊗ L ≈ 𝒰𝒰ᵀ` by alternating minimisation.
//!
//! Not used by any optimizer: the factors it produces carry no domination
//! guarantee.

use crate::error::{Error, Result};
use crate::linalg::{kron, unvec, DenseMatrix, KRON_MAX_ENTRIES};

pub const DEFAULT_SWEEPS: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct KronApproxResult {
    pub l: DenseMatrix,
    pub r: DenseMatrix,
    /// `‖R⊗L − 𝒰𝒰ᵀ‖_F / ‖𝒰𝒰ᵀ‖_F` for the returned factors.
    pub rel_error: f64,
    pub sweeps: usize,
    /// Objective `‖R⊗L − 𝒰𝒰ᵀ‖_F²` after every half-sweep.
    pub history: Vec<f64>,
    /// Set when `𝒰 = 0`; the factors are then `(0, I)`.
    pub degenerate: bool,
}

fn slices(u: &DenseMatrix, m: usize, n: usize) -> Result<Vec<DenseMatrix>> {
    if u.rows() != m * n || u.cols() == 0 {
        return Err(Error::shape(format!(
            "factor {:?} for an {m}x{n} Kronecker approximation",
            u.shape()
        )));
    }
    let ut = u.transpose();
    (0..u.cols())
        .map(|i| unvec(&ut.block(i, 0, 1, m * n).to_vec(), m, n, u.precision()))
        .collect()
}

/// `‖R⊗L − 𝒰𝒰ᵀ‖_F²`, formed explicitly when the Kronecker product is small
/// enough and through traces otherwise.
pub fn kron_objective(u: &DenseMatrix, m: usize, n: usize, l: &DenseMatrix, r: &DenseMatrix) -> Result<f64> {
    let big = m * n;
    if big * big <= KRON_MAX_ENTRIES {
        let diff = kron(r, l)?.sub(&u.matmul_t(u)?)?;
        let f = diff.frob_norm();
        return Ok(f * f);
    }
    let us = slices(u, m, n)?;
    let mut cross = 0.0;
    for ui in &us {
        cross += l.dot(&ui.matmul(r)?.matmul_t(ui)?)?;
    }
    let g = u.t_matmul(u)?.frob_norm();
    let (nl, nr) = (l.frob_norm(), r.frob_norm());
    Ok((nl * nl * nr * nr - 2.0 * cross + g * g).max(0.0))
}

/// Alternates `L ← Σ Uᵢ R Uᵢᵀ / ‖R‖²` and `R ← Σ Uᵢᵀ L Uᵢ / ‖L‖²` from
/// `R = I`, rescaling after each sweep so that `‖L‖_F = ‖R‖_F`.
///
/// Stops after `sweeps` full sweeps or once a sweep lowers the objective by
/// less than `tol · ‖𝒰𝒰ᵀ‖_F²`.
pub fn nearest_kron_altmin(
    u: &DenseMatrix,
    m: usize,
    n: usize,
    sweeps: usize,
    tol: f64,
) -> Result<KronApproxResult> {
    let us = slices(u, m, n)?;
    let prec = u.precision();
    let gram = u.t_matmul(u)?.frob_norm();
    if gram == 0.0 {
        return Ok(KronApproxResult {
            l: DenseMatrix::zeros(m, m, prec),
            r: DenseMatrix::identity(n, prec),
            rel_error: 0.0,
            sweeps: 0,
            history: Vec::new(),
            degenerate: true,
        });
    }
    let scale = gram * gram;
    let mut l = DenseMatrix::zeros(m, m, prec);
    let mut r = DenseMatrix::identity(n, prec);
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    let mut done = 0;
    for _ in 0..sweeps {
        let nr = r.frob_norm();
        let mut acc = DenseMatrix::zeros(m, m, prec);
        for ui in &us {
            acc = acc.add(&ui.matmul(&r)?.matmul_t(ui)?)?;
        }
        l = acc.scale(1.0 / (nr * nr)).symmetrize();
        history.push(kron_objective(u, m, n, &l, &r)?);

        let nl = l.frob_norm();
        if nl == 0.0 {
            break;
        }
        let mut acc = DenseMatrix::zeros(n, n, prec);
        for ui in &us {
            acc = acc.add(&ui.t_matmul(&l)?.matmul(ui)?)?;
        }
        r = acc.scale(1.0 / (nl * nl)).symmetrize();
        let obj = kron_objective(u, m, n, &l, &r)?;
        history.push(obj);
        done += 1;

        let nr = r.frob_norm();
        if nr > 0.0 {
            let s = (nr / l.frob_norm()).sqrt();
            l = l.scale(s);
            r = r.scale(1.0 / s);
        }
        if prev - obj < tol * scale {
            break;
        }
        prev = obj;
    }
    let rel_error = kron_objective(u, m, n, &l, &r)?.sqrt() / gram;
    Ok(KronApproxResult {
        l,
        r,
        rel_error,
        sweeps: done,
        history,
        degenerate: false,
    })
}
