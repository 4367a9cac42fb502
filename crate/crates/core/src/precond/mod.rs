//! Kronecker-factored preconditioners: Shampoo, KrADagrad* and alternating
//! KrADagrad, with damping, delayed statistics, blocking and an order-D
//! tensor variant.
//!
//! All three kinds keep a left factor `L` (`m x m`) and a right factor `R`
//! (`n x n`) for an `m x n` gradient. For Shampoo these slots hold the
//! accumulated statistics `B` and `C`; for the KrAD kinds they hold the
//! factors directly, which start at the identity and only shrink.

mod block;
mod delayed;
mod driver;
mod powers;
mod tensor;
mod update;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Precision};
use crate::roots::{RootConfig, RootIterState, RootMethod};

pub use block::{block_partition, BlockedPreconditioner};
pub use delayed::{delayed_accumulate, delayed_flush, DelayedAccumulator};
pub use driver::Preconditioner;
pub use powers::{apply_damping, refresh_powers, RefreshInfo, EIG_MAX_DIM, F32_FLOOR};
pub use tensor::{tensor_kradstar_update, TensorKradStar};
pub use update::{
    kradalt_precondition, kradalt_update, kradstar_precondition, kradstar_update,
    middle_norm_exact, shampoo_precondition, shampoo_update, update_schedule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondKind {
    Shampoo,
    KradStar,
    KradAlt,
}

impl PrecondKind {
    /// Exponent applied to each factor for a given `α`.
    pub fn exponent(self, alpha: f64) -> f64 {
        match self {
            PrecondKind::Shampoo => -alpha / 2.0,
            PrecondKind::KradStar => alpha / 2.0,
            PrecondKind::KradAlt => alpha,
        }
    }

    pub fn is_krad(self) -> bool {
        !matches!(self, PrecondKind::Shampoo)
    }
}

/// Norm used in the scalar `t = 1 + ‖·‖` of a KrAD update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TNorm {
    /// Frobenius norm of the middle product; cheap upper bound.
    Frobenius,
    /// Exact largest eigenvalue of the symmetrised middle product.
    Spectral,
    /// Trace of the middle product, as used for delayed statistics.
    Trace,
}

/// Which factor alternating KrADagrad updates at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdatePolicy {
    /// `L, R, L, R, ...`
    Alternate,
    /// `R` on every `j`-th step, `L` otherwise.
    RightEvery(usize),
    /// `R` for the first `K'` steps, `L` afterwards.
    RightUpTo(usize),
}

/// Which factor(s) a delayed flush updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecondConfig {
    /// `ε` of the damping `L(I − εL)` applied before taking KrAD roots.
    pub damping_eps: f64,
    /// Root refresh cadence; also the flush interval for delayed statistics.
    pub update_interval: usize,
    pub block_size: Option<usize>,
    pub t_norm: TNorm,
    pub root_cfg: RootConfig,
    /// `ε` of the Shampoo statistics `εI + Σ G Gᵀ`.
    pub shampoo_eps: f64,
    pub alpha: f64,
    pub policy: UpdatePolicy,
    /// Accumulate KrAD statistics and apply them once per interval.
    pub delayed: bool,
    pub precision: Precision,
}

impl Default for PrecondConfig {
    fn default() -> Self {
        PrecondConfig {
            damping_eps: 1e-4,
            update_interval: 20,
            block_size: None,
            t_norm: TNorm::Frobenius,
            root_cfg: RootConfig::for_precision(Precision::F64).with_method(RootMethod::Eig),
            shampoo_eps: 1e-4,
            alpha: 0.5,
            policy: UpdatePolicy::Alternate,
            delayed: false,
            precision: Precision::F64,
        }
    }
}

impl PrecondConfig {
    /// Defaults with the root tolerance matched to `precision`.
    pub fn for_precision(precision: Precision) -> Self {
        PrecondConfig {
            root_cfg: RootConfig::for_precision(precision).with_method(RootMethod::Eig),
            precision,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.update_interval == 0 {
            return bad("update_interval must be at least 1".into());
        }
        if let Some(b) = self.block_size {
            if b < 2 {
                return bad(format!("block_size must be at least 2, got {b}"));
            }
        }
        if !(self.damping_eps >= 0.0) {
            return bad(format!("damping_eps must be non-negative, got {}", self.damping_eps));
        }
        if !(self.shampoo_eps > 0.0) {
            return bad(format!("shampoo_eps must be positive, got {}", self.shampoo_eps));
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if let UpdatePolicy::RightEvery(0) = self.policy {
            return bad("RightEvery needs a positive period".into());
        }
        self.root_cfg.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Per-step scalars reported by the updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// `t` of the left update; 1 when the left factor was not updated.
    pub t_l: f64,
    pub t_r: f64,
    /// Upper bound on `‖M_k‖₂` from the chosen t-norm; always below 1.
    pub middle_norm: f64,
    /// Residual of the root iteration on refresh steps, NaN otherwise or
    /// for the spectral route.
    pub root_residual: f64,
    pub root_iters: usize,
    /// Eigenvalues raised to the `f32` floor on this step.
    pub floor_hits: usize,
    pub refreshed: bool,
}

impl Default for StepDiagnostics {
    fn default() -> Self {
        StepDiagnostics {
            t_l: 1.0,
            t_r: 1.0,
            middle_norm: 0.0,
            root_residual: f64::NAN,
            root_iters: 0,
            floor_hits: 0,
            refreshed: false,
        }
    }
}

/// Factors, cached powers and step counter for one parameter.
#[derive(Debug, Clone)]
pub struct PreconditionerState {
    pub kind: PrecondKind,
    pub alpha: f64,
    pub step: usize,
    pub l: DenseMatrix,
    pub r: DenseMatrix,
    pub l_pow: DenseMatrix,
    pub r_pow: DenseMatrix,
    pub warm_l: Option<RootIterState>,
    pub warm_r: Option<RootIterState>,
    /// Factors changed since their power was last computed.
    pub l_dirty: bool,
    pub r_dirty: bool,
}

impl PreconditionerState {
    /// Identity factors for KrAD kinds, `εI` statistics for Shampoo.
    pub fn new(kind: PrecondKind, m: usize, n: usize, cfg: &PrecondConfig) -> Result<Self> {
        cfg.validate()?;
        if m == 0 || n == 0 {
            return Err(Error::shape(format!("preconditioner for a {m}x{n} parameter")));
        }
        let prec = cfg.precision;
        let (l, r, l_pow, r_pow) = match kind {
            PrecondKind::Shampoo => {
                let e = cfg.shampoo_eps;
                let s = e.powf(kind.exponent(cfg.alpha));
                (
                    DenseMatrix::identity(m, prec).scale(e),
                    DenseMatrix::identity(n, prec).scale(e),
                    DenseMatrix::identity(m, prec).scale(s),
                    DenseMatrix::identity(n, prec).scale(s),
                )
            }
            _ => (
                DenseMatrix::identity(m, prec),
                DenseMatrix::identity(n, prec),
                DenseMatrix::identity(m, prec),
                DenseMatrix::identity(n, prec),
            ),
        };
        Ok(PreconditionerState {
            kind,
            alpha: cfg.alpha,
            step: 0,
            l,
            r,
            l_pow,
            r_pow,
            warm_l: None,
            warm_r: None,
            l_dirty: false,
            r_dirty: false,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.l.rows(), self.r.rows())
    }

    pub fn precision(&self) -> Precision {
        self.l.precision()
    }

    pub(crate) fn check_grad(&self, g: &DenseMatrix) -> Result<()> {
        if g.shape() != self.shape() {
            return Err(Error::shape(format!(
                "gradient {:?} for a {:?} preconditioner",
                g.shape(),
                self.shape()
            )));
        }
        if g.precision() != self.precision() {
            return Err(Error::PrecisionMismatch {
                left: self.precision(),
                right: g.precision(),
            });
        }
        Ok(())
    }

    /// Checkpoint of `(kind, α, step, L, R, L_pow, R_pow)`.
    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            kind: self.kind,
            alpha: self.alpha,
            step: self.step,
            l: self.l.clone(),
            r: self.r.clone(),
            l_pow: self.l_pow.clone(),
            r_pow: self.r_pow.clone(),
        }
    }

    pub fn from_snapshot(s: StateSnapshot) -> Result<Self> {
        let (m, n) = (s.l.rows(), s.r.rows());
        if !s.l.is_square() || !s.r.is_square() || s.l_pow.shape() != (m, m) || s.r_pow.shape() != (n, n) {
            return Err(Error::shape("inconsistent factor shapes in snapshot"));
        }
        Ok(PreconditionerState {
            kind: s.kind,
            alpha: s.alpha,
            step: s.step,
            l: s.l,
            r: s.r,
            l_pow: s.l_pow,
            r_pow: s.r_pow,
            warm_l: None,
            warm_r: None,
            l_dirty: false,
            r_dirty: false,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&self.snapshot()).map_err(|e| Error::Argument(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: StateSnapshot =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad snapshot: {e}")))?;
        Self::from_snapshot(s)
    }
}

/// Serialisable state; fields are written in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub kind: PrecondKind,
    pub alpha: f64,
    pub step: usize,
    #[serde(rename = "L")]
    pub l: DenseMatrix,
    #[serde(rename = "R")]
    pub r: DenseMatrix,
    #[serde(rename = "L_pow")]
    pub l_pow: DenseMatrix,
    #[serde(rename = "R_pow")]
    pub r_pow: DenseMatrix,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_keeps_field_order() {
        let cfg = PrecondConfig::for_precision(Precision::F32);
        let mut st = PreconditionerState::new(PrecondKind::KradStar, 2, 3, &cfg).unwrap();
        st.step = 7;
        st.l.set(0, 1, 0.25);
        st.l.set(1, 0, 0.25);
        let text = st.to_json().unwrap();
        let keys = ["\"kind\"", "\"alpha\"", "\"step\"", "\"L\"", "\"R\"", "\"L_pow\"", "\"R_pow\""];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{text}");
        let back = PreconditionerState::from_json(&text).unwrap();
        assert_eq!(back.snapshot(), st.snapshot());
        assert_eq!(back.precision(), Precision::F32);
    }

    #[test]
    fn config_validation() {
        let ok = PrecondConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            PrecondConfig { update_interval: 0, ..ok },
            PrecondConfig { block_size: Some(1), ..ok },
            PrecondConfig { damping_eps: -1.0, ..ok },
            PrecondConfig { shampoo_eps: 0.0, ..ok },
            PrecondConfig { policy: UpdatePolicy::RightEvery(0), ..ok },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn initial_states() {
        let cfg = PrecondConfig { shampoo_eps: 1e-4, ..Default::default() };
        let s = PreconditionerState::new(PrecondKind::Shampoo, 2, 2, &cfg).unwrap();
        assert_eq!(s.l.get(0, 0), 1e-4);
        assert!((s.l_pow.get(0, 0) - 10.0).abs() < 1e-12);
        let k = PreconditionerState::new(PrecondKind::KradAlt, 3, 1, &cfg).unwrap();
        assert_eq!(k.shape(), (3, 1));
        assert!(PreconditionerState::new(PrecondKind::KradAlt, 0, 1, &cfg).is_err());
    }
}
