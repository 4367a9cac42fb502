use super::update::krad_shrink;
use super::{PrecondConfig, StepDiagnostics};
use crate::error::{Error, Result};
use crate::linalg::{power_from_eig, sym_eig, DenseMatrix, SymEig};
use crate::tensor::{contract_dim, tensor_matrix_product, DenseTensor};

/// KrADagrad* for an order-`D` parameter: one factor per dimension, each
/// shrunk by the contraction of the gradient over all other dimensions.
#[derive(Debug, Clone)]
pub struct TensorKradStar {
    pub factors: Vec<DenseMatrix>,
    pub pows: Vec<DenseMatrix>,
    pub alpha: f64,
    pub step: usize,
}

impl TensorKradStar {
    pub fn new(shape: &[usize], cfg: &PrecondConfig) -> Result<Self> {
        cfg.validate()?;
        if shape.is_empty() || shape.len() > crate::tensor::MAX_ORDER {
            return Err(Error::Argument(format!("unsupported tensor order {}", shape.len())));
        }
        let factors: Vec<DenseMatrix> = shape
            .iter()
            .map(|&n| DenseMatrix::identity(n, cfg.precision))
            .collect();
        Ok(TensorKradStar {
            pows: factors.clone(),
            factors,
            alpha: cfg.alpha,
            step: 0,
        })
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    /// Exponent `α / D` applied to each factor.
    pub fn exponent(&self) -> f64 {
        self.alpha / self.order() as f64
    }

    /// Recomputes every `L_d^{α/D}` with the same damping as the matrix case.
    pub fn refresh(&mut self, cfg: &PrecondConfig) -> Result<()> {
        let e = self.exponent();
        for (f, p) in self.factors.iter().zip(self.pows.iter_mut()) {
            let eig = sym_eig(f)?;
            let eps = cfg.damping_eps;
            let damped = SymEig {
                eigenvalues: eig.eigenvalues.iter().map(|&v| v - eps * v * v).collect(),
                eigenvectors: eig.eigenvectors,
            };
            *p = power_from_eig(&damped, e)?;
        }
        Ok(())
    }

    /// `G ×₁ L₁^{α/D} ⋯ ×_D L_D^{α/D}`.
    pub fn precondition(&self, g: &DenseTensor) -> Result<DenseTensor> {
        self.check(g)?;
        let mut out = g.clone();
        for (d, p) in self.pows.iter().enumerate() {
            out = tensor_matrix_product(&out, p, d + 1)?;
        }
        Ok(out)
    }

    fn check(&self, g: &DenseTensor) -> Result<()> {
        let shape: Vec<usize> = self.factors.iter().map(|f| f.rows()).collect();
        if g.shape() != shape.as_slice() {
            return Err(Error::shape(format!(
                "gradient {:?} for factors {shape:?}",
                g.shape()
            )));
        }
        Ok(())
    }
}

/// One tensor KrADagrad* step; every factor sees the same gradient and its
/// own previous value. Returns the per-dimension `t` values.
pub fn tensor_kradstar_update(
    state: &mut TensorKradStar,
    g: &DenseTensor,
    cfg: &PrecondConfig,
) -> Result<(Vec<f64>, StepDiagnostics)> {
    state.check(g)?;
    let mut ts = Vec::with_capacity(state.order());
    for (d, f) in state.factors.iter_mut().enumerate() {
        let c = contract_dim(g, d + 1)?;
        ts.push(krad_shrink(f, &c, cfg.t_norm)?);
    }
    state.step += 1;
    let diag = StepDiagnostics {
        t_l: ts[0],
        t_r: *ts.last().expect("order at least one"),
        middle_norm: ts.iter().fold(0f64, |m, &t| m.max((t - 1.0) / t)),
        ..Default::default()
    };
    Ok((ts, diag))
}
