//! Experiment driver: the ill-conditioned quadratic, a stochastic
//! least-squares regret probe, learning-rate sweeps and CSV traces.

mod optimizer;
mod problem;
mod trace;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use optimizer::{OptKind, Optimizer, OptimizerSpec};
pub use problem::{
    bench_rng, gaussian, gen_spd_illconditioned, householder_q, quad_grad, quad_loss, spd_with_condition,
    spectrum, stochastic_lsq, LsqBatch, LsqStream, SyntheticProblem,
};
pub use trace::{write_regret, write_regret_to, write_trace, write_trace_to, REGRET_HEADER, TRACE_HEADER};

use crate::error::{Error, Result};
use crate::linalg::{unvec, vec, DenseMatrix, Precision};

/// Loss growth beyond this multiple of the initial loss counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// The learning-rate grid of the synthetic sweep.
pub const LR_GRID: [f64; 10] = [1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1, 2e-1, 5e-1, 1e0];

/// Six log-uniform epsilons from `1e-3` down to `1e-8`.
pub fn eps_grid() -> Vec<f64> {
    (0..6).map(|i| 10f64.powf(-3.0 - i as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProblemSpec {
    Quad { n: usize },
    StochasticLsq { n: usize, batch: usize, noise: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerSpec,
    pub steps: usize,
    pub seed: u64,
    pub eval_every: usize,
}

impl ExperimentSpec {
    /// The quadratic benchmark with a refresh interval of 3.
    pub fn quad(n: usize, steps: usize, optimizer: OptimizerSpec, seed: u64) -> Self {
        ExperimentSpec {
            problem: ProblemSpec::Quad { n },
            optimizer: optimizer.with_interval(3),
            steps,
            seed,
            eval_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.eval_every == 0 {
            return Err(Error::Config("steps and eval_every must be at least 1".into()));
        }
        self.optimizer.validate()
    }
}

/// One emitted row. The divergence marker has `loss = +∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub wall_ms: f64,
    pub t_l: f64,
    pub t_r: f64,
    pub root_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossTrace {
    pub rows: Vec<TraceRow>,
    pub initial_loss: f64,
    /// Step at which the run was cut off, with the reason.
    pub diverged: Option<(usize, String)>,
    /// Cumulative regret after every step, for the least-squares problem.
    pub regret: Vec<f64>,
}

impl LossTrace {
    /// Loss of the last evaluated row that is not the divergence marker.
    pub fn final_loss(&self) -> f64 {
        self.rows
            .iter()
            .rev()
            .find(|r| r.loss.is_finite())
            .map_or(self.initial_loss, |r| r.loss)
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged.is_some()
    }
}

/// Loss and gradient source for one run.
enum Objective {
    Quad(Box<SyntheticProblem>),
    Lsq(LsqStream, (usize, usize)),
}

/// Near-square factorisation `a · b = n`, `a ≤ b`, for reshaping a weight
/// vector into a matrix parameter.
pub fn matrix_shape(n: usize) -> (usize, usize) {
    let mut a = (n as f64).sqrt() as usize;
    while a > 1 && n % a != 0 {
        a -= 1;
    }
    (a.max(1), n / a.max(1))
}

impl Objective {
    fn new(spec: &ExperimentSpec) -> Result<Self> {
        Ok(match spec.problem {
            ProblemSpec::Quad { n } => Objective::Quad(Box::new(SyntheticProblem::new(n, spec.seed)?)),
            ProblemSpec::StochasticLsq { n, batch, noise } => Objective::Lsq(
                stochastic_lsq(n, batch, noise, spec.seed).map_err(|e| Error::Config(e.to_string()))?,
                matrix_shape(n),
            ),
        })
    }

    fn start(&self, precision: Precision) -> DenseMatrix {
        match self {
            Objective::Quad(p) => p.x0.with_precision(precision),
            Objective::Lsq(_, (a, b)) => DenseMatrix::zeros(*a, *b, precision),
        }
    }
}

/// Runs `spec` to completion or divergence.
///
/// For the quadratic the loss is the full objective; for least squares it
/// is the loss of the batch seen at that step, before the update, and
/// `regret` accumulates `f_k(w_k) − f_k(w*)`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<LossTrace> {
    spec.validate()?;
    let mut obj = Objective::new(spec)?;
    let prec = spec.optimizer.precision();
    let mut w = obj.start(prec);
    let (m, n) = w.shape();
    let mut opt = Optimizer::new(spec.optimizer, m, n)?;

    let initial_loss = match &obj {
        Objective::Quad(p) => quad_loss(p, &w)?,
        Objective::Lsq(s, _) => s.clone().next().expect("endless stream").loss(&to_column(&w))?,
    };
    let mut trace = LossTrace {
        rows: vec![TraceRow {
            step: 0,
            loss: initial_loss,
            wall_ms: 0.0,
            t_l: 1.0,
            t_r: 1.0,
            root_residual: f64::NAN,
        }],
        initial_loss,
        diverged: None,
        regret: Vec::new(),
    };
    let mut regret = 0.0;
    for k in 1..=spec.steps {
        let started = Instant::now();
        let stepped = match &mut obj {
            Objective::Quad(p) => quad_grad(p, &w).and_then(|g| opt.step(&w, &g)).and_then(|(next, d)| {
                let loss = quad_loss(p, &next)?;
                Ok((next, d, loss))
            }),
            Objective::Lsq(stream, _) => {
                let batch = stream.next().expect("endless stream");
                let col = to_column(&w);
                let loss = batch.loss(&col)?;
                regret += loss - batch.loss(&stream.w_star)?;
                trace.regret.push(regret);
                batch
                    .grad(&col)
                    .and_then(|g| unvec(&g.to_vec(), m, n, prec))
                    .and_then(|g| opt.step(&w, &g))
                    .map(|(next, d)| (next, d, loss))
            }
        };
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        let (next, diag, loss) = match stepped {
            Ok(v) => v,
            Err(e) if e.is_numeric() => {
                mark_divergence(&mut trace, k, wall_ms, e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || loss > DIVERGENCE_FACTOR * initial_loss.max(f64::MIN_POSITIVE) {
            mark_divergence(&mut trace, k, wall_ms, format!("loss {loss:e} at step {k}"));
            break;
        }
        w = next;
        if k % spec.eval_every == 0 || k == spec.steps {
            trace.rows.push(TraceRow {
                step: k,
                loss,
                wall_ms,
                t_l: diag.t_l,
                t_r: diag.t_r,
                root_residual: diag.root_residual,
            });
        }
    }
    Ok(trace)
}

fn to_column(w: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_vec(w.rows() * w.cols(), 1, vec(w), w.precision()).expect("same entries")
}

fn mark_divergence(trace: &mut LossTrace, step: usize, wall_ms: f64, why: String) {
    trace.rows.push(TraceRow {
        step,
        loss: f64::INFINITY,
        wall_ms,
        t_l: f64::NAN,
        t_r: f64::NAN,
        root_residual: f64::NAN,
    });
    trace.diverged = Some((step, why));
}

/// One grid point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub lr: f64,
    pub eps: f64,
    pub spec: ExperimentSpec,
    pub trace: LossTrace,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub best: usize,
    /// Set when no cell finished; `best` then ranks by how long cells lasted.
    pub all_diverged: bool,
}

impl SweepResult {
    pub fn best_cell(&self) -> &SweepCell {
        &self.cells[self.best]
    }
}

/// Runs every `(lr, eps)` pair and selects the lowest final loss, breaking
/// ties toward the smaller learning rate.
///
/// When every cell diverges the one that lasted longest wins, then the one
/// with the lower last finite loss, then the smaller learning rate.
pub fn lr_sweep(template: &ExperimentSpec, lrs: &[f64], eps_list: &[f64]) -> Result<SweepResult> {
    if lrs.is_empty() || eps_list.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let epss: &[f64] = if template.optimizer.kind.uses_eps() { eps_list } else { &eps_list[..1] };
    let mut cells = Vec::with_capacity(lrs.len() * epss.len());
    for &lr in lrs {
        for &eps in epss {
            let mut spec = *template;
            spec.optimizer = spec.optimizer.with_lr(lr).with_eps(eps);
            let trace = run_experiment(&spec)?;
            cells.push(SweepCell { lr, eps: spec.optimizer.eps(), spec, trace });
        }
    }
    let all_diverged = cells.iter().all(|c| c.trace.is_diverged());
    let key = |c: &SweepCell| {
        let lasted = c.trace.diverged.as_ref().map_or(usize::MAX, |d| d.0);
        (std::cmp::Reverse(lasted), c.trace.final_loss(), c.lr)
    };
    let best = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| all_diverged || !c.trace.is_diverged())
        .min_by(|(_, a), (_, b)| {
            let (ka, kb) = (key(a), key(b));
            ka.0.cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
        })
        .map(|(i, _)| i)
        .expect("nonempty grid");
    Ok(SweepResult { cells, best, all_diverged })
}

/// `R(2K) / R(K)` from a cumulative regret series of at least `2K` steps.
pub fn regret_ratio(regret: &[f64], k: usize) -> Result<f64> {
    if k == 0 || regret.len() < 2 * k {
        return Err(Error::Argument(format!(
            "regret ratio at K = {k} needs {} steps, have {}",
            2 * k,
            regret.len()
        )));
    }
    Ok(regret[2 * k - 1] / regret[k - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let e = eps_grid();
        assert_eq!(e.len(), 6);
        assert!((e[0] - 1e-3).abs() < 1e-18 && (e[5] - 1e-8).abs() < 1e-22);
        assert_eq!(matrix_shape(16), (4, 4));
        assert_eq!(matrix_shape(12), (3, 4));
        assert_eq!(matrix_shape(7), (1, 7));
    }

    #[test]
    fn zero_lr_gives_a_constant_trace() {
        let spec = ExperimentSpec::quad(8, 5, OptimizerSpec::new(OptKind::Sgd, Precision::F64).with_lr(0.0), 1);
        let t = run_experiment(&spec).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert!(t.rows.iter().all(|r| r.loss == t.initial_loss));
    }

    #[test]
    fn divergence_is_marked() {
        let spec = ExperimentSpec::quad(8, 50, OptimizerSpec::new(OptKind::Sgd, Precision::F64).with_lr(1.0), 1);
        let t = run_experiment(&spec).unwrap();
        assert!(t.is_diverged());
        assert_eq!(t.rows.last().unwrap().loss, f64::INFINITY);
        assert!(t.final_loss().is_finite());
    }

    #[test]
    fn sweep_prefers_a_decreasing_lr_over_zero() {
        let base = OptimizerSpec::new(OptKind::AdagradDiag, Precision::F64);
        let spec = ExperimentSpec::quad(6, 20, base, 2);
        let res = lr_sweep(&spec, &[0.0, 1e-2], &[1e-8]).unwrap();
        assert_eq!(res.best_cell().lr, 1e-2);
        let single = lr_sweep(&spec, &[5e-3], &[1e-6]).unwrap();
        assert_eq!(single.best, 0);
        assert!(lr_sweep(&spec, &[], &[1e-6]).is_err());
    }
}
