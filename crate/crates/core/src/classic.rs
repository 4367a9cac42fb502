//! First-order and AdaGrad baselines. Every stepper is a pure function of
//! `(w, g, cfg, state)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::scalar::Real;
use crate::linalg::{column, unvec, vec, DenseMatrix, Precision};
use crate::roots::root_eig;

/// Largest parameter count accepted by [`full_adagrad_step`].
pub const FULL_ADAGRAD_MAX_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub momentum: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub eps: f64,
    pub precision: Precision,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 1e-3,
            momentum: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            eps: 1e-8,
            precision: Precision::F64,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if !unit(self.momentum) || !unit(self.adam_beta1) || !unit(self.adam_beta2) {
            return Err(Error::Config("momentum and Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps {} must be finite and >= 0", self.eps)));
        }
        Ok(())
    }
}

fn same_shape(w: &DenseMatrix, others: &[&DenseMatrix]) -> Result<()> {
    for o in others {
        if o.shape() != w.shape() {
            return Err(Error::shape(format!("{:?} against {:?}", o.shape(), w.shape())));
        }
        if o.precision() != w.precision() {
            return Err(Error::PrecisionMismatch {
                left: w.precision(),
                right: o.precision(),
            });
        }
    }
    Ok(())
}

/// Runs an elementwise kernel over the typed buffers of `ins`, producing
/// `K` output matrices of the same shape and precision.
fn elementwise<const K: usize>(
    ins: &[&DenseMatrix],
    f32k: impl Fn(&[f32]) -> [f32; K],
    f64k: impl Fn(&[f64]) -> [f64; K],
) -> [DenseMatrix; K] {
    fn go<T: Real, const K: usize>(ins: &[&DenseMatrix], f: impl Fn(&[T]) -> [T; K]) -> [DenseMatrix; K] {
        let (r, c) = ins[0].shape();
        let bufs: Vec<&[T]> = ins.iter().map(|m| m.typed::<T>()).collect();
        let mut outs: [Vec<T>; K] = std::array::from_fn(|_| Vec::with_capacity(r * c));
        let mut args = vec![T::zero(); ins.len()];
        for i in 0..r * c {
            for (a, b) in args.iter_mut().zip(&bufs) {
                *a = b[i];
            }
            for (o, v) in outs.iter_mut().zip(f(&args)) {
                o.push(v);
            }
        }
        outs.map(|o| DenseMatrix::from_typed(r, c, o))
    }
    match ins[0].precision() {
        Precision::F32 => go(ins, f32k),
        Precision::F64 => go(ins, f64k),
    }
}

/// Heavy-ball SGD: `v ← μv + g`, `w ← w − ηv`.
pub fn sgd_step(
    w: &DenseMatrix,
    g: &DenseMatrix,
    cfg: &OptimizerConfig,
    velocity: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    same_shape(w, &[g, velocity])?;
    macro_rules! kernel {
        ($t:ty) => {
            |a: &[$t]| {
                let v = cfg.momentum as $t * a[2] + a[1];
                [a[0] - cfg.lr as $t * v, v]
            }
        };
    }
    let [w, v] = elementwise(&[w, g, velocity], kernel!(f32), kernel!(f64));
    Ok((w, v))
}

/// Adam with bias-corrected moments; `k` is the 1-based step number.
pub fn adam_step(
    w: &DenseMatrix,
    g: &DenseMatrix,
    cfg: &OptimizerConfig,
    m: &DenseMatrix,
    v: &DenseMatrix,
    k: usize,
) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix)> {
    if k == 0 {
        return Err(Error::Argument("Adam step numbers start at 1".into()));
    }
    same_shape(w, &[g, m, v])?;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(k as i32);
    let c2 = 1.0 - b2.powi(k as i32);
    macro_rules! kernel {
        ($t:ty) => {
            |a: &[$t]| {
                let (b1, b2) = (b1 as $t, b2 as $t);
                let m = b1 * a[2] + (1.0 - b1) * a[1];
                let v = b2 * a[3] + (1.0 - b2) * a[1] * a[1];
                let step = (m / c1 as $t) / ((v / c2 as $t).sqrt() + cfg.eps as $t);
                [a[0] - cfg.lr as $t * step, m, v]
            }
        };
    }
    let [w, m, v] = elementwise(&[w, g, m, v], kernel!(f32), kernel!(f64));
    Ok((w, m, v))
}

/// Diagonal AdaGrad: `a ← a + g²`, `w ← w − η g / √(δ + a)`.
///
/// Coordinates whose accumulator is still zero are left in place.
pub fn diag_adagrad_step(
    w: &DenseMatrix,
    g: &DenseMatrix,
    cfg: &OptimizerConfig,
    accum: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    same_shape(w, &[g, accum])?;
    macro_rules! kernel {
        ($t:ty) => {
            |a: &[$t]| {
                let acc = a[2] + a[1] * a[1];
                let den = (cfg.eps as $t + acc).sqrt();
                let w = if den > 0.0 { a[0] - cfg.lr as $t * a[1] / den } else { a[0] };
                [w, acc]
            }
        };
    }
    let [w, acc] = elementwise(&[w, g, accum], kernel!(f32), kernel!(f64));
    Ok((w, acc))
}

/// Full-matrix AdaGrad statistic over `vec(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullAdagradState {
    /// Accumulated `Σ vec(g) vec(g)ᵀ`.
    pub s: DenseMatrix,
    pub delta: f64,
}

impl FullAdagradState {
    pub fn new(n: usize, delta: f64, precision: Precision) -> Result<Self> {
        if n > FULL_ADAGRAD_MAX_DIM {
            return Err(Error::Capacity(format!(
                "full AdaGrad over {n} parameters (limit {FULL_ADAGRAD_MAX_DIM})"
            )));
        }
        Ok(FullAdagradState {
            s: DenseMatrix::zeros(n, n, precision),
            delta,
        })
    }
}

/// `S ← S + ggᵀ`, `w ← w − η (δI + S)^{-1/2} g` on `vec` coordinates.
pub fn full_adagrad_step(
    w: &DenseMatrix,
    g: &DenseMatrix,
    cfg: &OptimizerConfig,
    state: &FullAdagradState,
) -> Result<(DenseMatrix, FullAdagradState)> {
    let (m, n) = w.shape();
    let big = m * n;
    if big > FULL_ADAGRAD_MAX_DIM {
        return Err(Error::Capacity(format!(
            "full AdaGrad over {big} parameters (limit {FULL_ADAGRAD_MAX_DIM})"
        )));
    }
    same_shape(w, &[g])?;
    if state.s.shape() != (big, big) {
        return Err(Error::shape(format!(
            "statistic {:?} for {big} parameters",
            state.s.shape()
        )));
    }
    let prec = w.precision();
    let gv = column(&vec(g), prec)?;
    let s = state.s.add(&gv.matmul_t(&gv)?)?.symmetrize();
    let mut reg = s.clone();
    reg.add_diag(state.delta);
    let dir = if reg.max_abs() == 0.0 {
        DenseMatrix::zeros(big, 1, prec)
    } else {
        root_eig(&reg, -0.5)?.matmul(&gv)?
    };
    let step = unvec(&dir.to_vec(), m, n, prec)?;
    let w = w.axpby(1.0, &step, -cfg.lr)?;
    Ok((w, FullAdagradState { s, delta: state.delta }))
}
