//! Fractional matrix roots of symmetric PSD matrices.
//!
//! The iterative routes work on `Â = A/‖A‖_F`, whose spectrum lies in `(0, 1]`,
//! and rescale the result at the end.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mat_power_psd, DenseMatrix, Precision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootMethod {
    CoupledNewton,
    NewtonSchulz,
    Eig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootConfig {
    pub max_iters: usize,
    pub residual_tol: f64,
    pub method: RootMethod,
    pub allow_warm_start: bool,
}

impl RootConfig {
    /// Tolerance `1e-10` for `f64`, `1e-5` for `f32`, 100 iterations.
    pub fn for_precision(precision: Precision) -> Self {
        RootConfig {
            max_iters: 100,
            residual_tol: match precision {
                Precision::F64 => 1e-10,
                Precision::F32 => 1e-5,
            },
            method: RootMethod::CoupledNewton,
            allow_warm_start: true,
        }
    }

    pub fn with_method(mut self, method: RootMethod) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0) {
            return Err(Error::Argument(format!(
                "residual_tol must be positive, got {}",
                self.residual_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Argument("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// Stopping threshold actually used for a given matrix: the configured
    /// tolerance, raised to the round-off floor of the matrix precision.
    fn effective_tol(&self, n: usize, precision: Precision) -> f64 {
        self.residual_tol.max(4.0 * n as f64 * precision.epsilon())
    }
}

impl Default for RootConfig {
    fn default() -> Self {
        RootConfig::for_precision(Precision::F64)
    }
}

/// State of the coupled Newton iteration for `Â^{-1/p}`.
///
/// `x` and `m` live in normalised coordinates; `norm` is the Frobenius norm
/// that was divided out of the input.
#[derive(Debug, Clone)]
pub struct RootIterState {
    pub x: DenseMatrix,
    pub m: DenseMatrix,
    pub p: u32,
    pub phi: u32,
    pub iter: usize,
    pub norm: f64,
    /// `‖M − I‖_F` after the latest iteration.
    pub residual: f64,
    /// `X^{p−1} Â`, carried along from a cold start when the positive root
    /// is wanted.
    pub root: Option<DenseMatrix>,
}

fn check_order(p: u32) -> Result<()> {
    if p < 2 || p % 2 != 0 {
        return Err(Error::Argument(format!("root order must be even and >= 2, got {p}")));
    }
    Ok(())
}

fn check_square(a: &DenseMatrix, what: &str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::shape(format!(
            "{what} of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    Ok(())
}

/// `(A/‖A‖_F, ‖A‖_F)` for a symmetric PSD input.
pub fn normalize(a: &DenseMatrix) -> Result<(DenseMatrix, f64)> {
    check_square(a, "normalisation")?;
    let c = a.frob_norm();
    if c == 0.0 {
        return Err(Error::Singular("zero matrix".into()));
    }
    Ok((a.symmetrize().scale(1.0 / c), c))
}

/// `A^k` by repeated squaring.
pub fn int_power(a: &DenseMatrix, k: u32) -> Result<DenseMatrix> {
    check_square(a, "integer power")?;
    let mut result: Option<DenseMatrix> = None;
    let mut base = a.clone();
    let mut k = k;
    while k > 0 {
        if k & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => r.matmul(&base)?,
            });
        }
        k >>= 1;
        if k > 0 {
            base = base.matmul(&base)?;
        }
    }
    Ok(result.unwrap_or_else(|| DenseMatrix::identity(a.rows(), a.precision())))
}

fn dist_to_identity(m: &DenseMatrix) -> f64 {
    let mut d = m.clone();
    d.add_diag(-1.0);
    d.frob_norm()
}

impl RootIterState {
    /// Cold start `(X, M) = (I, Â)`.
    pub fn cold(a_hat: &DenseMatrix, p: u32) -> Result<Self> {
        check_order(p)?;
        check_square(a_hat, "coupled Newton")?;
        Ok(RootIterState {
            x: DenseMatrix::identity(a_hat.rows(), a_hat.precision()),
            m: a_hat.clone(),
            p,
            phi: p / 2,
            iter: 0,
            norm: 1.0,
            residual: dist_to_identity(a_hat),
            root: None,
        })
    }

    /// Warm start `(X, M) = (X̂, X̂^φ Â X̂^φ)`.
    pub fn warm(a_hat: &DenseMatrix, x_hat: &DenseMatrix, p: u32) -> Result<Self> {
        check_order(p)?;
        check_square(a_hat, "coupled Newton")?;
        if x_hat.shape() != a_hat.shape() {
            return Err(Error::shape("warm-start iterate does not match the input"));
        }
        let xp = int_power(x_hat, p / 2)?;
        let m = xp.matmul(a_hat)?.matmul(&xp)?.symmetrize();
        let residual = dist_to_identity(&m);
        Ok(RootIterState {
            x: x_hat.symmetrize(),
            m,
            p,
            phi: p / 2,
            iter: 0,
            norm: 1.0,
            residual,
            root: None,
        })
    }

    /// Cold start that also tracks `Y = X^{p−1} Â`, which converges to
    /// `Â^{1/p}`.
    pub fn cold_tracking_root(a_hat: &DenseMatrix, p: u32) -> Result<Self> {
        let mut st = Self::cold(a_hat, p)?;
        st.root = Some(a_hat.clone());
        Ok(st)
    }

    /// One step: `N = ((p+1)I − M)/p`, `X ← sym(N X)`, `M ← N^p M`, and
    /// `Y ← N^{p−1} Y` when tracked.
    pub fn step(&mut self) -> Result<()> {
        let p = self.p as f64;
        let mut n = self.m.scale(-1.0 / p);
        n.add_diag((p + 1.0) / p);
        self.x = n.matmul(&self.x)?.symmetrize();
        let n_pm1 = int_power(&n, self.p - 1)?;
        if let Some(y) = &self.root {
            self.root = Some(n_pm1.matmul(y)?.symmetrize());
        }
        self.m = n.matmul(&n_pm1)?.matmul(&self.m)?.symmetrize();
        self.iter += 1;
        self.residual = dist_to_identity(&self.m);
        if !self.residual.is_finite() {
            return Err(Error::NonFinite("coupled Newton iteration"));
        }
        Ok(())
    }

    /// `‖M − X^φ Â X^φ‖_F`, the drift of the coupling invariant.
    pub fn invariant_gap(&self, a_hat: &DenseMatrix) -> Result<f64> {
        let xp = int_power(&self.x, self.phi)?;
        let expected = xp.matmul(a_hat)?.matmul(&xp)?;
        Ok(self.m.sub(&expected)?.frob_norm())
    }

    /// `X` rescaled back to `A^{-1/p}`.
    pub fn inverse_root(&self) -> DenseMatrix {
        self.x.scale(self.norm.powf(-1.0 / self.p as f64))
    }
}

/// Iterates until `‖M − I‖_F` reaches the tolerance.
fn run_coupled(a_hat: &DenseMatrix, mut st: RootIterState, cfg: &RootConfig) -> Result<RootIterState> {
    let tol = cfg.effective_tol(a_hat.rows(), a_hat.precision());
    let mut best = st.clone();
    let mut increases = 0;
    while st.residual > tol {
        if st.iter >= cfg.max_iters {
            // A stuck eigenvalue of M near zero keeps the residual at or
            // above one: the input is numerically singular.
            if st.residual >= 0.5 {
                return Err(Error::Singular(format!(
                    "coupled Newton stalled at residual {:e}",
                    st.residual
                )));
            }
            return Err(Error::NoConvergence {
                what: "coupled Newton",
                residual: st.residual,
            });
        }
        let prev = st.residual;
        st.step()?;
        // While tiny eigenvalues of M climb, the residual plateaus and
        // rounding alone can nudge it up; only rises above `tol` count.
        if st.residual > prev + tol {
            increases += 1;
            if increases >= 3 {
                return Err(Error::Divergence {
                    residual: best.residual,
                    best: Box::new(best.inverse_root()),
                });
            }
        } else {
            increases = 0;
        }
        if st.residual < best.residual {
            best = st.clone();
        }
    }
    Ok(st)
}

/// `A^{-1/p}` by the coupled Newton iteration.
///
/// With `warm` set and warm starts enabled, the iteration starts from the
/// previous iterate, rescaled to the new normalisation. A warm start whose
/// initial residual is worse than the cold one, or which fails numerically,
/// is replaced by a cold start. When the new input does not commute with the
/// previous iterate the coupling invariant drifts, which bounds the accuracy
/// of a warm-started root; [`RootIterState::invariant_gap`] measures it.
pub fn inv_proot(
    a: &DenseMatrix,
    p: u32,
    cfg: &RootConfig,
    warm: Option<&RootIterState>,
) -> Result<(DenseMatrix, RootIterState)> {
    let (st, _) = coupled(a, p, cfg, warm, false)?;
    Ok((st.inverse_root(), st))
}

/// Runs the coupled iteration on `A/‖A‖_F`; returns the final state and the
/// normalised input.
fn coupled(
    a: &DenseMatrix,
    p: u32,
    cfg: &RootConfig,
    warm: Option<&RootIterState>,
    track_root: bool,
) -> Result<(RootIterState, DenseMatrix)> {
    cfg.validate()?;
    check_order(p)?;
    let (a_hat, c) = normalize(a)?;
    if a_hat.diag().iter().any(|&d| d <= 0.0) {
        return Err(Error::Singular("non-positive diagonal entry".into()));
    }
    let cold = if track_root {
        RootIterState::cold_tracking_root(&a_hat, p)?
    } else {
        RootIterState::cold(&a_hat, p)?
    };
    if let Some(prev) = warm.filter(|w| cfg.allow_warm_start && w.p == p) {
        if prev.x.shape() == a_hat.shape() && prev.x.precision() == a_hat.precision() {
            let x0 = prev.x.scale((c / prev.norm).powf(1.0 / p as f64));
            let start = RootIterState::warm(&a_hat, &x0, p)?;
            if start.residual <= cold.residual {
                match run_coupled(&a_hat, start, cfg) {
                    Ok(mut done) => {
                        done.norm = c;
                        return Ok((done, a_hat));
                    }
                    Err(e) if e.is_numeric() => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let mut done = run_coupled(&a_hat, cold, cfg)?;
    done.norm = c;
    Ok((done, a_hat))
}

/// `A^{1/p} = A · (A^{-1/p})^{p−1}`.
///
/// Multiplying by `A` damps the error the inverse root carries in the
/// directions of small eigenvalues. From a cold start the product is
/// accumulated during the iteration as `Y ← N^{p−1} Y`, `Y₀ = Â`, so no
/// factor with entries of size `κ^{1/p}` is ever formed.
///
/// The iteration runs on `A + δI`, `δ = 4·eps·‖A‖_F`. Once `κ` nears
/// `1/eps`, rounding alone can leave `A` indefinite, and Newton then either
/// diverges or settles on a wrong root. The shift moves `X^p` by
/// `4·eps·√n` relative to `‖A‖_F`.
pub fn proot(
    a: &DenseMatrix,
    p: u32,
    cfg: &RootConfig,
    warm: Option<&RootIterState>,
) -> Result<(DenseMatrix, RootIterState)> {
    check_square(a, "proot")?;
    let mut ridged = a.clone();
    ridged.add_diag(4.0 * a.precision().epsilon() * a.frob_norm());
    let (mut st, a_hat) = coupled(&ridged, p, cfg, warm, true)?;
    let scale = st.norm.powf(1.0 / p as f64);
    let root = match st.root.take() {
        Some(y) => y.scale(scale),
        None => {
            // Warm start: splitting X^{p−1} around Â as X^a Â X^b keeps the
            // large entries of each power away from the rounding error of
            // the other.
            let a_pow = (p - 1) / 2;
            let right = a_hat.matmul(&int_power(&st.x, p - 1 - a_pow)?)?;
            let split = if a_pow == 0 {
                right
            } else {
                int_power(&st.x, a_pow)?.matmul(&right)?
            };
            split.symmetrize().scale(scale)
        }
    };
    Ok((root.check_finite("proot")?, st))
}

/// Newton–Schulz iteration for `(A^{1/2}, A^{-1/2})`.
///
/// Returns the pair together with the number of iterations and the final
/// relative residual `‖Y² − A‖_F / ‖A‖_F`.
pub fn sqrt_newton_schulz(
    a: &DenseMatrix,
    cfg: &RootConfig,
) -> Result<(DenseMatrix, DenseMatrix, usize, f64)> {
    cfg.validate()?;
    let (a_hat, c) = normalize(a)?;
    let n = a_hat.rows();
    let tol = cfg.effective_tol(n, a_hat.precision());
    let residual_of = |y: &DenseMatrix| -> Result<f64> {
        Ok(y.matmul(y)?.sub(&a_hat)?.frob_norm() / a_hat.frob_norm())
    };
    let mut y = a_hat.clone();
    let mut z = DenseMatrix::identity(n, a_hat.precision());
    let mut residual = residual_of(&y)?;
    let mut best = (y.clone(), residual);
    let mut increases = 0;
    let mut iters = 0;
    while residual > tol {
        if iters >= cfg.max_iters {
            return Err(Error::NoConvergence {
                what: "Newton-Schulz",
                residual,
            });
        }
        let mut x = z.matmul(&y)?.scale(-0.5);
        x.add_diag(1.5);
        let next_y = y.matmul(&x)?.symmetrize();
        z = x.matmul(&z)?.symmetrize();
        y = next_y;
        iters += 1;
        let prev = residual;
        residual = residual_of(&y)?;
        if !residual.is_finite() {
            return Err(Error::NonFinite("Newton-Schulz iteration"));
        }
        if residual > prev + tol {
            increases += 1;
            if increases >= 3 {
                return Err(Error::Divergence {
                    residual: best.1,
                    best: Box::new(best.0.scale(c.sqrt())),
                });
            }
        } else {
            increases = 0;
        }
        if residual < best.1 {
            best = (y.clone(), residual);
        }
    }
    Ok((y.scale(c.sqrt()), z.scale(1.0 / c.sqrt()), iters, residual))
}

/// `A^r` through the spectral decomposition.
pub fn root_eig(a: &DenseMatrix, r: f64) -> Result<DenseMatrix> {
    mat_power_psd(a, r)
}

/// Outcome of [`matrix_power`].
#[derive(Debug, Clone)]
pub struct RootOutcome {
    pub matrix: DenseMatrix,
    /// Coupled Newton state, kept for warm starts.
    pub state: Option<RootIterState>,
    pub iters: usize,
    /// Residual of the iterative method; NaN for the spectral route.
    pub residual: f64,
    pub wall_ms: f64,
}

/// `A^{±1/p}` by the configured method.
///
/// `CoupledNewton` handles any even `p`; `NewtonSchulz` handles `p = 2`.
pub fn matrix_power(
    a: &DenseMatrix,
    p: u32,
    inverse: bool,
    cfg: &RootConfig,
    warm: Option<&RootIterState>,
) -> Result<RootOutcome> {
    let start = Instant::now();
    let exponent = if inverse { -1.0 } else { 1.0 } / p as f64;
    let (matrix, state, iters, residual) = match cfg.method {
        RootMethod::Eig => (root_eig(a, exponent)?, None, 0, f64::NAN),
        RootMethod::CoupledNewton => {
            let (m, st) = if inverse {
                inv_proot(a, p, cfg, warm)?
            } else {
                proot(a, p, cfg, warm)?
            };
            let (iters, residual) = (st.iter, st.residual);
            (m, Some(st), iters, residual)
        }
        RootMethod::NewtonSchulz => {
            if p != 2 {
                return Err(Error::Argument(format!(
                    "Newton-Schulz computes square roots only, got p = {p}"
                )));
            }
            let (y, z, iters, residual) = sqrt_newton_schulz(a, cfg)?;
            (if inverse { z } else { y }, None, iters, residual)
        }
    };
    Ok(RootOutcome {
        matrix,
        state,
        iters,
        residual,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f64_cfg() -> RootConfig {
        RootConfig::for_precision(Precision::F64)
    }

    #[test]
    fn inverse_fourth_root_of_scaled_identity() {
        let a = DenseMatrix::identity(3, Precision::F64).scale(16.0);
        let (x, _) = inv_proot(&a, 4, &f64_cfg(), None).unwrap();
        assert!(x.max_abs_diff(&DenseMatrix::identity(3, Precision::F64).scale(0.5)) < 1e-12);
    }

    #[test]
    fn identity_is_a_fixed_point() {
        // ‖I‖_F normalisation makes Â = I/√n, so check the result instead of
        // the iteration count for n > 1.
        let one = DenseMatrix::identity(1, Precision::F64);
        let (x, st) = inv_proot(&one, 6, &f64_cfg(), None).unwrap();
        assert_eq!(st.iter, 0);
        assert_eq!(x, one);
        let i4 = DenseMatrix::identity(4, Precision::F64);
        for p in [2, 4, 8] {
            let (x, _) = inv_proot(&i4, p, &f64_cfg(), None).unwrap();
            assert!(x.max_abs_diff(&i4) < 1e-12);
            let (r, _) = proot(&i4, p, &f64_cfg(), None).unwrap();
            assert!(r.max_abs_diff(&i4) < 1e-12);
        }
    }

    #[test]
    fn wide_spectrum_square_root() {
        let a = DenseMatrix::from_diag(&[1.0, 1e10], Precision::F64);
        let (x, _) = inv_proot(&a, 2, &f64_cfg(), None).unwrap();
        assert!((x.get(0, 0) - 1.0).abs() <= 1e-8);
        assert!((x.get(1, 1) - 1e-5).abs() <= 1e-8 * 1e-5);
        assert_eq!(x.get(0, 1), 0.0);
    }

    #[test]
    fn positive_root_of_diagonal() {
        let a = DenseMatrix::from_diag(&[16.0], Precision::F64);
        let (r, _) = proot(&a, 4, &f64_cfg(), None).unwrap();
        assert!((r.get(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn newton_schulz_small_cases() {
        let q = DenseMatrix::identity(3, Precision::F64).scale(0.25);
        let (y, z, _, res) = sqrt_newton_schulz(&q, &f64_cfg()).unwrap();
        assert!(res <= 1e-10);
        assert!(y.max_abs_diff(&DenseMatrix::identity(3, Precision::F64).scale(0.5)) < 1e-10);
        assert!(z.max_abs_diff(&DenseMatrix::identity(3, Precision::F64).scale(2.0)) < 1e-9);
        let i = DenseMatrix::identity(2, Precision::F64);
        let (y, z, _, _) = sqrt_newton_schulz(&i, &f64_cfg()).unwrap();
        assert!(y.max_abs_diff(&i) < 1e-10 && z.max_abs_diff(&i) < 1e-10);
    }

    #[test]
    fn rejects_odd_orders_and_bad_configs() {
        let a = DenseMatrix::identity(2, Precision::F64);
        assert!(matches!(inv_proot(&a, 3, &f64_cfg(), None), Err(Error::Argument(_))));
        let mut cfg = f64_cfg();
        cfg.residual_tol = 0.0;
        assert!(matches!(inv_proot(&a, 2, &cfg, None), Err(Error::Argument(_))));
        cfg = f64_cfg();
        cfg.max_iters = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn singular_inputs_are_reported() {
        let a = DenseMatrix::from_diag(&[1.0, 0.0], Precision::F64);
        assert!(matches!(inv_proot(&a, 2, &f64_cfg(), None), Err(Error::Singular(_))));
        let z = DenseMatrix::zeros(2, 2, Precision::F64);
        assert!(matches!(inv_proot(&z, 2, &f64_cfg(), None), Err(Error::Singular(_))));
        // Numerically singular but with a positive diagonal.
        let v = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]], Precision::F64).unwrap();
        let err = inv_proot(&v, 2, &f64_cfg(), None).unwrap_err();
        assert!(matches!(err, Error::Singular(_)), "{err}");
    }

    #[test]
    fn int_power_matches_repeated_products() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]], Precision::F64).unwrap();
        let mut expect = DenseMatrix::identity(2, Precision::F64);
        for k in 0..7 {
            assert!(int_power(&a, k).unwrap().max_abs_diff(&expect) < 1e-12);
            expect = expect.matmul(&a).unwrap();
        }
    }

    #[test]
    fn dispatcher_routes_each_method() {
        let a = DenseMatrix::from_diag(&[4.0, 9.0], Precision::F64);
        let want = DenseMatrix::from_diag(&[0.5, 1.0 / 3.0], Precision::F64);
        for method in [RootMethod::Eig, RootMethod::CoupledNewton, RootMethod::NewtonSchulz] {
            let cfg = f64_cfg().with_method(method);
            let out = matrix_power(&a, 2, true, &cfg, None).unwrap();
            assert!(out.matrix.max_abs_diff(&want) < 1e-9, "{method:?}");
        }
        let cfg = f64_cfg().with_method(RootMethod::NewtonSchulz);
        assert!(matrix_power(&a, 4, false, &cfg, None).is_err());
    }
}
