use super::{PrecondConfig, PrecondKind, PreconditionerState, StepDiagnostics, TNorm, UpdatePolicy};
use crate::error::{Error, Result};
use crate::linalg::{mat_power_psd, sym_eig, DenseMatrix};

fn require(state: &PreconditionerState, kind: PrecondKind, op: &str) -> Result<()> {
    if state.kind != kind {
        return Err(Error::Argument(format!("{op} on a {:?} state", state.kind)));
    }
    Ok(())
}

/// `B += G Gᵀ`, `C += Gᵀ G`.
pub fn shampoo_update(state: &mut PreconditionerState, g: &DenseMatrix) -> Result<StepDiagnostics> {
    require(state, PrecondKind::Shampoo, "shampoo_update")?;
    state.check_grad(g)?;
    state.l = state.l.add(&g.matmul_t(g)?)?.symmetrize();
    state.r = state.r.add(&g.t_matmul(g)?)?.symmetrize();
    state.l_dirty = true;
    state.r_dirty = true;
    Ok(StepDiagnostics::default())
}

fn apply_cached(state: &PreconditionerState, g: &DenseMatrix) -> Result<DenseMatrix> {
    state.check_grad(g)?;
    state.l_pow.matmul(g)?.matmul(&state.r_pow)
}

/// `B^{-α/2} G C^{-α/2}` from the cached powers.
pub fn shampoo_precondition(state: &PreconditionerState, g: &DenseMatrix) -> Result<DenseMatrix> {
    require(state, PrecondKind::Shampoo, "shampoo_precondition")?;
    apply_cached(state, g)
}

/// `L^{α/2} G R^{α/2}` from the cached powers.
pub fn kradstar_precondition(state: &PreconditionerState, g: &DenseMatrix) -> Result<DenseMatrix> {
    require(state, PrecondKind::KradStar, "kradstar_precondition")?;
    apply_cached(state, g)
}

/// `L^{α} G R^{α}` from the cached powers.
pub fn kradalt_precondition(state: &PreconditionerState, g: &DenseMatrix) -> Result<DenseMatrix> {
    require(state, PrecondKind::KradAlt, "kradalt_precondition")?;
    apply_cached(state, g)
}

/// Largest eigenvalue of `F^{1/2} S F^{1/2}` for PSD `F`, `S`.
fn top_eig_sandwich(f: &DenseMatrix, s: &DenseMatrix) -> Result<f64> {
    let h = mat_power_psd(f, 0.5)?;
    let m = h.matmul(s)?.matmul(&h)?;
    Ok(sym_eig(&m)?.eigenvalues.last().copied().unwrap_or(0.0).max(0.0))
}

/// `t = 1 + ‖S F‖` in the chosen norm.
pub(crate) fn t_scalar(norm: TNorm, s: &DenseMatrix, f: &DenseMatrix) -> Result<f64> {
    let raw = match norm {
        TNorm::Frobenius => s.matmul(f)?.frob_norm(),
        TNorm::Trace => s.dot(f)?.max(0.0),
        TNorm::Spectral => top_eig_sandwich(f, s)?,
    };
    let t = 1.0 + raw;
    if !t.is_finite() {
        return Err(Error::NonFinite("KrAD t scalar"));
    }
    Ok(t)
}

/// `F ← F − F S F / t` with `t = 1 + ‖S F‖`. Returns `t`.
pub(crate) fn krad_shrink(f: &mut DenseMatrix, s: &DenseMatrix, norm: TNorm) -> Result<f64> {
    let t = t_scalar(norm, s, f)?;
    let delta = f.matmul(s)?.matmul(f)?;
    *f = f.axpby(1.0, &delta, -1.0 / t)?.symmetrize();
    Ok(t)
}

/// One KrADagrad* step: both factors shrink by their own gradient products,
/// `ΔL = L G Gᵀ L / t_L` and `ΔR = R Gᵀ G R / t_R`.
pub fn kradstar_update(
    state: &mut PreconditionerState,
    g: &DenseMatrix,
    cfg: &PrecondConfig,
) -> Result<StepDiagnostics> {
    require(state, PrecondKind::KradStar, "kradstar_update")?;
    state.check_grad(g)?;
    let ggt = g.matmul_t(g)?;
    let gtg = g.t_matmul(g)?;
    let t_l = krad_shrink(&mut state.l, &ggt, cfg.t_norm)?;
    let t_r = krad_shrink(&mut state.r, &gtg, cfg.t_norm)?;
    state.l_dirty = true;
    state.r_dirty = true;
    Ok(StepDiagnostics {
        t_l,
        t_r,
        middle_norm: ((t_l - 1.0) / t_l).max((t_r - 1.0) / t_r),
        ..Default::default()
    })
}

/// One alternating KrADagrad step, updating `L` with `ΔL = L G R Gᵀ L / t`
/// or `R` with `ΔR = R Gᵀ L G R / t`.
pub fn kradalt_update(
    state: &mut PreconditionerState,
    g: &DenseMatrix,
    update_left: bool,
    cfg: &PrecondConfig,
) -> Result<StepDiagnostics> {
    require(state, PrecondKind::KradAlt, "kradalt_update")?;
    state.check_grad(g)?;
    let mut d = StepDiagnostics::default();
    let t = if update_left {
        let s = g.matmul(&state.r)?.matmul_t(g)?;
        let t = krad_shrink(&mut state.l, &s, cfg.t_norm)?;
        state.l_dirty = true;
        d.t_l = t;
        t
    } else {
        let s = g.t_matmul(&state.l)?.matmul(g)?;
        let t = krad_shrink(&mut state.r, &s, cfg.t_norm)?;
        state.r_dirty = true;
        d.t_r = t;
        t
    };
    d.middle_norm = (t - 1.0) / t;
    Ok(d)
}

/// Exact `‖L^{1/2} G R Gᵀ L^{1/2}‖₂ / t` for checking the `‖M_k‖₂ < 1` bound.
pub fn middle_norm_exact(l: &DenseMatrix, g: &DenseMatrix, r: &DenseMatrix, t: f64) -> Result<f64> {
    let s = g.matmul(r)?.matmul_t(g)?;
    Ok(top_eig_sandwich(l, &s)? / t)
}

/// `true` when step `k` (1-based) updates the left factor.
pub fn update_schedule(k: usize, policy: UpdatePolicy) -> bool {
    match policy {
        UpdatePolicy::Alternate => k % 2 == 1,
        UpdatePolicy::RightEvery(j) => j == 0 || k % j != 0,
        UpdatePolicy::RightUpTo(kp) => k > kp,
    }
}
