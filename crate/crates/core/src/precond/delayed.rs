use super::update::krad_shrink;
use super::{PrecondConfig, PrecondKind, PreconditionerState, Side, StepDiagnostics};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Statistics gathered between KrAD updates.
///
/// For KrADagrad* the left sum is `Σ G Gᵀ`; for the alternating kind it is
/// `Σ G R Gᵀ` with `R` frozen at its value when the gradient arrived, and
/// symmetrically on the right.
#[derive(Debug, Clone)]
pub struct DelayedAccumulator {
    pub accum_l: DenseMatrix,
    pub accum_r: DenseMatrix,
    pub pending: usize,
    pub interval: usize,
}

impl DelayedAccumulator {
    pub fn new(state: &PreconditionerState, interval: usize) -> Result<Self> {
        if interval == 0 {
            return Err(Error::Config("delayed interval must be at least 1".into()));
        }
        let (m, n) = state.shape();
        Ok(DelayedAccumulator {
            accum_l: DenseMatrix::zeros(m, m, state.precision()),
            accum_r: DenseMatrix::zeros(n, n, state.precision()),
            pending: 0,
            interval,
        })
    }

    pub fn is_full(&self) -> bool {
        self.pending >= self.interval
    }

    fn reset(&mut self) {
        let prec = self.accum_l.precision();
        self.accum_l = DenseMatrix::zeros(self.accum_l.rows(), self.accum_l.rows(), prec);
        self.accum_r = DenseMatrix::zeros(self.accum_r.rows(), self.accum_r.rows(), prec);
        self.pending = 0;
    }
}

/// Adds one gradient to the pending statistics.
pub fn delayed_accumulate(
    acc: &mut DelayedAccumulator,
    state: &PreconditionerState,
    g: &DenseMatrix,
) -> Result<()> {
    if !state.kind.is_krad() {
        return Err(Error::Argument("delayed statistics apply to KrAD kinds".into()));
    }
    state.check_grad(g)?;
    if acc.is_full() {
        return Err(Error::Argument(format!(
            "accumulator already holds {} gradients",
            acc.pending
        )));
    }
    let (sl, sr) = match state.kind {
        PrecondKind::KradAlt => (g.matmul(&state.r)?.matmul_t(g)?, g.t_matmul(&state.l)?.matmul(g)?),
        _ => (g.matmul_t(g)?, g.t_matmul(g)?),
    };
    acc.accum_l = acc.accum_l.add(&sl)?.symmetrize();
    acc.accum_r = acc.accum_r.add(&sr)?.symmetrize();
    acc.pending += 1;
    Ok(())
}

/// Applies the pending statistics as one KrAD update on the requested
/// side(s), `F ← F − F S F / t` with `t = 1 + ‖S F‖`, and clears them.
/// An empty accumulator leaves the state untouched.
pub fn delayed_flush(
    acc: &mut DelayedAccumulator,
    state: &mut PreconditionerState,
    side: Side,
    cfg: &PrecondConfig,
) -> Result<StepDiagnostics> {
    let mut d = StepDiagnostics::default();
    if acc.pending == 0 {
        return Ok(d);
    }
    if matches!(side, Side::Left | Side::Both) {
        d.t_l = krad_shrink(&mut state.l, &acc.accum_l, cfg.t_norm)?;
        state.l_dirty = true;
    }
    if matches!(side, Side::Right | Side::Both) {
        d.t_r = krad_shrink(&mut state.r, &acc.accum_r, cfg.t_norm)?;
        state.r_dirty = true;
    }
    d.middle_norm = ((d.t_l - 1.0) / d.t_l).max((d.t_r - 1.0) / d.t_r);
    acc.reset();
    Ok(d)
}
