use super::{PrecondConfig, PrecondKind, PreconditionerState};
use crate::error::{Error, Result};
use crate::linalg::{power_from_eig, psd_clamp_tol, spec_norm, sym_eig, DenseMatrix, Precision, SymEig};
use crate::roots::{matrix_power, RootIterState, RootMethod};

/// Largest factor dimension for which the spectral route is kept; larger
/// factors switch to warm-started coupled Newton.
pub const EIG_MAX_DIM: usize = 512;

/// Relative eigenvalue floor applied to `f32` KrAD factors.
pub const F32_FLOOR: f64 = 1e-7;

/// `L(I − εL)`, a damped factor that stays below `L` in the Loewner order.
pub fn apply_damping(l: &DenseMatrix, eps: f64) -> Result<DenseMatrix> {
    if eps == 0.0 {
        return Ok(l.clone());
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("damping epsilon {eps} is negative")));
    }
    let top = spec_norm(l)?;
    if eps * top >= 1.0 {
        return Err(Error::Domain(format!(
            "damping needs ε‖L‖₂ < 1, got {eps} * {top}"
        )));
    }
    Ok(l.axpby(1.0, &l.matmul(l)?, -eps)?.symmetrize())
}

/// What a root refresh did.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RefreshInfo {
    pub residual: f64,
    pub iters: usize,
    pub floor_hits: usize,
    pub refreshed: bool,
}

fn order_of(exponent: f64) -> Result<u32> {
    let p = (1.0 / exponent.abs()).round();
    if (p * exponent.abs() - 1.0).abs() > 1e-12 || p < 2.0 || p as u32 % 2 != 0 {
        return Err(Error::Argument(format!(
            "exponent {exponent} is not ±1/p for an even p; use the spectral route"
        )));
    }
    Ok(p as u32)
}

/// Raises eigenvalues below `F32_FLOOR · λ_max` to that floor. Returns the
/// number raised; `f` is rebuilt only when something changed.
fn floor_eigenvalues(f: &mut DenseMatrix, eig: &mut SymEig) -> Result<usize> {
    let top = eig.eigenvalues.iter().fold(0f64, |m, &v| m.max(v));
    let floor = F32_FLOOR * top;
    let mut hits = 0;
    for v in eig.eigenvalues.iter_mut() {
        if *v < floor {
            *v = floor;
            hits += 1;
        }
    }
    if hits > 0 {
        *f = eig.reconstruct()?;
    }
    Ok(hits)
}

struct SideOut {
    pow: DenseMatrix,
    warm: Option<RootIterState>,
    residual: f64,
    iters: usize,
    floor_hits: usize,
}

fn krad_side(
    f: &mut DenseMatrix,
    exponent: f64,
    cfg: &PrecondConfig,
    warm: Option<&RootIterState>,
) -> Result<SideOut> {
    let n = f.rows();
    let eps = cfg.damping_eps;
    let method = effective_method(cfg, n);
    let needs_eig = method == RootMethod::Eig || f.precision() == Precision::F32;
    let mut eig = if needs_eig { Some(sym_eig(f)?) } else { None };
    let mut floor_hits = 0;
    if f.precision() == Precision::F32 {
        floor_hits = floor_eigenvalues(f, eig.as_mut().expect("eig computed for f32"))?;
    }
    if method == RootMethod::Eig {
        let eig = eig.expect("eig computed for the spectral route");
        let top = eig.eigenvalues.iter().fold(0f64, |m, &v| m.max(v));
        if eps * top >= 1.0 {
            return Err(Error::Domain(format!(
                "damping needs ε‖L‖₂ < 1, got {eps} * {top}"
            )));
        }
        let damped = SymEig {
            eigenvalues: eig.eigenvalues.iter().map(|&v| v - eps * v * v).collect(),
            eigenvectors: eig.eigenvectors,
        };
        return Ok(SideOut {
            pow: power_from_eig(&damped, exponent)?,
            warm: None,
            residual: f64::NAN,
            iters: 0,
            floor_hits,
        });
    }
    let damped = apply_damping(f, eps)?;
    let root_cfg = cfg.root_cfg.with_method(method);
    let out = matrix_power(&damped, order_of(exponent)?, exponent < 0.0, &root_cfg, warm)?;
    Ok(SideOut {
        pow: out.matrix,
        warm: out.state,
        residual: out.residual,
        iters: out.iters,
        floor_hits,
    })
}

fn shampoo_side(
    f: &DenseMatrix,
    exponent: f64,
    cfg: &PrecondConfig,
    warm: Option<&RootIterState>,
) -> Result<SideOut> {
    let method = effective_method(cfg, f.rows());
    if method == RootMethod::Eig {
        // The statistic is εI plus a PSD sum, so nothing below ε is genuine,
        // and nothing below the round-off level of the largest eigenvalue is
        // resolved at all.
        let mut eig = sym_eig(f)?;
        let top = eig.eigenvalues.iter().fold(0f64, |m, &v| m.max(v));
        let floor = cfg.shampoo_eps.max(psd_clamp_tol(f.precision()) * top);
        for v in eig.eigenvalues.iter_mut() {
            *v = v.max(floor);
        }
        return Ok(SideOut {
            pow: power_from_eig(&eig, exponent)?,
            warm: None,
            residual: f64::NAN,
            iters: 0,
            floor_hits: 0,
        });
    }
    let root_cfg = cfg.root_cfg.with_method(method);
    let out = matrix_power(f, order_of(exponent)?, exponent < 0.0, &root_cfg, warm)?;
    Ok(SideOut {
        pow: out.matrix,
        warm: out.state,
        residual: out.residual,
        iters: out.iters,
        floor_hits: 0,
    })
}

fn effective_method(cfg: &PrecondConfig, n: usize) -> RootMethod {
    match cfg.root_cfg.method {
        RootMethod::Eig if n > EIG_MAX_DIM => RootMethod::CoupledNewton,
        m => m,
    }
}

/// Recomputes the cached power of every factor changed since the last
/// refresh. `f32` KrAD factors get their small eigenvalues floored first.
pub fn refresh_powers(state: &mut PreconditionerState, cfg: &PrecondConfig) -> Result<RefreshInfo> {
    let exponent = state.kind.exponent(state.alpha);
    let mut info = RefreshInfo {
        residual: f64::NAN,
        ..Default::default()
    };
    let warm_ok = cfg.root_cfg.allow_warm_start;
    for left in [true, false] {
        let dirty = if left { state.l_dirty } else { state.r_dirty };
        if !dirty {
            continue;
        }
        let warm = if !warm_ok {
            None
        } else if left {
            state.warm_l.as_ref()
        } else {
            state.warm_r.as_ref()
        };
        let warm = warm.cloned();
        let out = {
            let f = if left { &mut state.l } else { &mut state.r };
            match state.kind {
                PrecondKind::Shampoo => shampoo_side(f, exponent, cfg, warm.as_ref())?,
                _ => krad_side(f, exponent, cfg, warm.as_ref())?,
            }
        };
        if left {
            state.l_pow = out.pow;
            state.warm_l = out.warm;
            state.l_dirty = false;
        } else {
            state.r_pow = out.pow;
            state.warm_r = out.warm;
            state.r_dirty = false;
        }
        info.refreshed = true;
        info.iters += out.iters;
        info.floor_hits += out.floor_hits;
        if out.residual.is_finite() {
            info.residual = if info.residual.is_finite() {
                info.residual.max(out.residual)
            } else {
                out.residual
            };
        }
    }
    Ok(info)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;

    #[test]
    fn damping_examples() {
        let l = DenseMatrix::from_diag(&[0.5, 0.25], Precision::F64);
        assert_eq!(apply_damping(&l, 0.0).unwrap(), l);
        let i = DenseMatrix::identity(3, Precision::F64);
        assert!(apply_damping(&i, 0.1).unwrap().max_abs_diff(&i.scale(0.9)) < 1e-15);
        assert!(matches!(apply_damping(&i, 1.0), Err(Error::Domain(_))));
        let d = apply_damping(&l, 0.3).unwrap();
        assert!(min_eigenvalue(&l.sub(&d).unwrap()).unwrap() >= 0.0);
    }

    #[test]
    fn orders_from_exponents() {
        assert_eq!(order_of(0.25).unwrap(), 4);
        assert_eq!(order_of(-0.5).unwrap(), 2);
        assert!(order_of(1.0).is_err());
        assert!(order_of(1.0 / 3.0).is_err());
    }

    #[test]
    fn refresh_computes_fourth_roots() {
        let mut cfg = PrecondConfig { damping_eps: 0.0, ..Default::default() };
        for method in [RootMethod::Eig, RootMethod::CoupledNewton] {
            cfg.root_cfg = cfg.root_cfg.with_method(method);
            let mut s = PreconditionerState::new(PrecondKind::KradStar, 2, 2, &cfg).unwrap();
            s.l = DenseMatrix::from_diag(&[0.0625, 1.0], Precision::F64);
            s.r = DenseMatrix::identity(2, Precision::F64).scale(16.0);
            s.l_dirty = true;
            s.r_dirty = true;
            let info = refresh_powers(&mut s, &cfg).unwrap();
            assert!(info.refreshed);
            assert!(s.l_pow.max_abs_diff(&DenseMatrix::from_diag(&[0.5, 1.0], Precision::F64)) < 1e-10);
            assert!(s.r_pow.max_abs_diff(&DenseMatrix::identity(2, Precision::F64).scale(2.0)) < 1e-10);
            assert!(!refresh_powers(&mut s, &cfg).unwrap().refreshed);
        }
    }

    #[test]
    fn shampoo_refresh_matches_closed_form() {
        let cfg = PrecondConfig::default();
        let mut s = PreconditionerState::new(PrecondKind::Shampoo, 2, 2, &cfg).unwrap();
        s.l = DenseMatrix::identity(2, Precision::F64).scale(16.0);
        s.r = DenseMatrix::identity(2, Precision::F64);
        s.l_dirty = true;
        s.r_dirty = true;
        refresh_powers(&mut s, &cfg).unwrap();
        let g = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]], Precision::F64).unwrap();
        let dir = super::super::shampoo_precondition(&s, &g).unwrap();
        assert!(dir.max_abs_diff(&g.scale(0.5)) < 1e-14);
    }

    #[test]
    fn f32_floor_is_counted() {
        let cfg = PrecondConfig::for_precision(Precision::F32);
        let mut s = PreconditionerState::new(PrecondKind::KradStar, 3, 1, &cfg).unwrap();
        s.l = DenseMatrix::from_diag(&[1.0, 1e-9, 0.5], Precision::F32);
        s.l_dirty = true;
        let info = refresh_powers(&mut s, &cfg).unwrap();
        assert_eq!(info.floor_hits, 1);
        assert!(min_eigenvalue(&s.l).unwrap() >= 0.5 * F32_FLOOR);
    }
}
