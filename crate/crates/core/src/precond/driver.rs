use super::delayed::{delayed_accumulate, delayed_flush, DelayedAccumulator};
use super::powers::refresh_powers;
use super::update::{kradalt_update, kradstar_update, shampoo_update, update_schedule};
use super::{PrecondConfig, PrecondKind, PreconditionerState, Side, StepDiagnostics};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// A preconditioner for one `m x n` parameter: statistics update, root
/// refresh on the configured cadence, and the preconditioned direction.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    pub cfg: PrecondConfig,
    pub state: PreconditionerState,
    acc: Option<DelayedAccumulator>,
    flushes: usize,
}

impl Preconditioner {
    pub fn new(kind: PrecondKind, m: usize, n: usize, cfg: PrecondConfig) -> Result<Self> {
        let state = PreconditionerState::new(kind, m, n, &cfg)?;
        let acc = if cfg.delayed {
            if !kind.is_krad() {
                return Err(Error::Config("delayed statistics apply to KrAD kinds".into()));
            }
            Some(DelayedAccumulator::new(&state, cfg.update_interval)?)
        } else {
            None
        };
        Ok(Preconditioner {
            cfg,
            state,
            acc,
            flushes: 0,
        })
    }

    pub fn kind(&self) -> PrecondKind {
        self.state.kind
    }

    fn update_statistics(&mut self, g: &DenseMatrix) -> Result<(StepDiagnostics, bool)> {
        let k = self.state.step;
        if let Some(acc) = self.acc.as_mut() {
            delayed_accumulate(acc, &self.state, g)?;
            if !acc.is_full() {
                return Ok((StepDiagnostics::default(), false));
            }
            self.flushes += 1;
            let side = match self.state.kind {
                PrecondKind::KradAlt if update_schedule(self.flushes, self.cfg.policy) => Side::Left,
                PrecondKind::KradAlt => Side::Right,
                _ => Side::Both,
            };
            return Ok((delayed_flush(acc, &mut self.state, side, &self.cfg)?, true));
        }
        let d = match self.state.kind {
            PrecondKind::Shampoo => shampoo_update(&mut self.state, g)?,
            PrecondKind::KradStar => kradstar_update(&mut self.state, g, &self.cfg)?,
            PrecondKind::KradAlt => {
                let left = update_schedule(k, self.cfg.policy);
                kradalt_update(&mut self.state, g, left, &self.cfg)?
            }
        };
        Ok((d, (k - 1) % self.cfg.update_interval == 0))
    }

    /// Updates the statistics with `g`, refreshes roots when due and returns
    /// the preconditioned direction.
    pub fn step(&mut self, g: &DenseMatrix) -> Result<(DenseMatrix, StepDiagnostics)> {
        self.state.check_grad(g)?;
        self.state.step += 1;
        let (mut d, due) = self.update_statistics(g)?;
        if due {
            let info = refresh_powers(&mut self.state, &self.cfg)?;
            d.refreshed = info.refreshed;
            d.root_residual = info.residual;
            d.root_iters = info.iters;
            d.floor_hits = info.floor_hits;
        }
        let dir = self.state.l_pow.matmul(g)?.matmul(&self.state.r_pow)?;
        Ok((dir, d))
    }
}
