use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classic::{
    adam_step, diag_adagrad_step, full_adagrad_step, sgd_step, FullAdagradState, OptimizerConfig,
};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Precision};
use crate::precond::{BlockedPreconditioner, PrecondConfig, PrecondKind, StepDiagnostics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptKind {
    #[serde(rename = "sgd")]
    Sgd,
    #[serde(rename = "adam")]
    Adam,
    #[serde(rename = "adagrad-diag")]
    AdagradDiag,
    #[serde(rename = "adagrad-full")]
    AdagradFull,
    #[serde(rename = "shampoo")]
    Shampoo,
    #[serde(rename = "kradstar")]
    KradStar,
    #[serde(rename = "kradalt")]
    KradAlt,
}

impl OptKind {
    pub const ALL: [OptKind; 7] = [
        OptKind::Sgd,
        OptKind::Adam,
        OptKind::AdagradDiag,
        OptKind::AdagradFull,
        OptKind::Shampoo,
        OptKind::KradStar,
        OptKind::KradAlt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptKind::Sgd => "sgd",
            OptKind::Adam => "adam",
            OptKind::AdagradDiag => "adagrad-diag",
            OptKind::AdagradFull => "adagrad-full",
            OptKind::Shampoo => "shampoo",
            OptKind::KradStar => "kradstar",
            OptKind::KradAlt => "kradalt",
        }
    }

    pub fn precond_kind(self) -> Option<PrecondKind> {
        match self {
            OptKind::Shampoo => Some(PrecondKind::Shampoo),
            OptKind::KradStar => Some(PrecondKind::KradStar),
            OptKind::KradAlt => Some(PrecondKind::KradAlt),
            _ => None,
        }
    }

    /// Whether the sweep's epsilon grid means anything for this kind.
    pub fn uses_eps(self) -> bool {
        self != OptKind::Sgd
    }
}

impl fmt::Display for OptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown optimizer `{s}`")))
    }
}

/// Optimizer kind with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub kind: OptKind,
    pub opt: OptimizerConfig,
    pub precond: PrecondConfig,
}

impl OptimizerSpec {
    /// Defaults for `kind` in `precision`. SGD uses momentum 0.9.
    pub fn new(kind: OptKind, precision: Precision) -> Self {
        let momentum = if kind == OptKind::Sgd { 0.9 } else { 0.0 };
        OptimizerSpec {
            kind,
            opt: OptimizerConfig { precision, momentum, ..Default::default() },
            precond: PrecondConfig::for_precision(precision),
        }
    }

    pub fn precision(&self) -> Precision {
        self.opt.precision
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.opt.lr = lr;
        self
    }

    pub fn with_interval(mut self, interval: usize) -> Self {
        self.precond.update_interval = interval;
        self
    }

    /// The epsilon of this kind: Shampoo's statistic initialisation, KrAD
    /// damping, or the δ of Adam and AdaGrad. SGD ignores it.
    pub fn eps(&self) -> f64 {
        match self.kind {
            OptKind::Sgd => f64::NAN,
            OptKind::Shampoo => self.precond.shampoo_eps,
            OptKind::KradStar | OptKind::KradAlt => self.precond.damping_eps,
            _ => self.opt.eps,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        match self.kind {
            OptKind::Sgd => {}
            OptKind::Shampoo => self.precond.shampoo_eps = eps,
            OptKind::KradStar | OptKind::KradAlt => self.precond.damping_eps = eps,
            _ => self.opt.eps = eps,
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.opt.validate()?;
        if self.kind.precond_kind().is_some() {
            self.precond.validate()?;
            if self.precond.precision != self.opt.precision {
                return Err(Error::Config(
                    "optimizer and preconditioner precisions differ".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum State {
    Sgd { v: DenseMatrix },
    Adam { m: DenseMatrix, v: DenseMatrix, k: usize },
    Diag { acc: DenseMatrix },
    Full(FullAdagradState),
    Precond(Box<BlockedPreconditioner>),
}

/// A running optimizer over one `m x n` parameter.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub spec: OptimizerSpec,
    state: State,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec, m: usize, n: usize) -> Result<Self> {
        spec.validate()?;
        let p = spec.precision();
        let z = || DenseMatrix::zeros(m, n, p);
        let state = match spec.kind {
            OptKind::Sgd => State::Sgd { v: z() },
            OptKind::Adam => State::Adam { m: z(), v: z(), k: 0 },
            OptKind::AdagradDiag => State::Diag { acc: z() },
            OptKind::AdagradFull => State::Full(FullAdagradState::new(m * n, spec.opt.eps, p)?),
            _ => {
                let kind = spec.kind.precond_kind().expect("preconditioned kind");
                State::Precond(Box::new(BlockedPreconditioner::new(kind, m, n, spec.precond)?))
            }
        };
        Ok(Optimizer { spec, state })
    }

    /// One update of `w` with gradient `g`.
    pub fn step(&mut self, w: &DenseMatrix, g: &DenseMatrix) -> Result<(DenseMatrix, StepDiagnostics)> {
        let cfg = &self.spec.opt;
        let none = StepDiagnostics::default();
        Ok(match &mut self.state {
            State::Sgd { v } => {
                let (w, nv) = sgd_step(w, g, cfg, v)?;
                *v = nv;
                (w, none)
            }
            State::Adam { m, v, k } => {
                *k += 1;
                let (w, nm, nv) = adam_step(w, g, cfg, m, v, *k)?;
                *m = nm;
                *v = nv;
                (w, none)
            }
            State::Diag { acc } => {
                let (w, na) = diag_adagrad_step(w, g, cfg, acc)?;
                *acc = na;
                (w, none)
            }
            State::Full(st) => {
                let (w, ns) = full_adagrad_step(w, g, cfg, st)?;
                *st = ns;
                (w, none)
            }
            State::Precond(p) => {
                let (dir, diag) = p.step(g)?;
                (w.axpby(1.0, &dir, -cfg.lr)?, diag)
            }
        })
    }
}
