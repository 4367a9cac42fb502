use std::ops::Range;

use super::{PrecondConfig, PrecondKind, Preconditioner, StepDiagnostics};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Contiguous 0-based ranges of length `block` covering `0..dim`; the last
/// may be shorter.
pub fn block_partition(dim: usize, block: usize) -> Result<Vec<Range<usize>>> {
    if block < 2 {
        return Err(Error::Argument(format!("block size must be at least 2, got {block}")));
    }
    Ok((0..dim)
        .step_by(block)
        .map(|s| s..(s + block).min(dim))
        .collect())
}

/// One independent [`Preconditioner`] per block of the parameter.
#[derive(Debug, Clone)]
pub struct BlockedPreconditioner {
    rows: Vec<Range<usize>>,
    cols: Vec<Range<usize>>,
    /// Row-major over `(row block, column block)`.
    pub blocks: Vec<Preconditioner>,
    shape: (usize, usize),
}

impl BlockedPreconditioner {
    /// Blocks of side `cfg.block_size`; a single block when unset.
    pub fn new(kind: PrecondKind, m: usize, n: usize, cfg: PrecondConfig) -> Result<Self> {
        cfg.validate()?;
        let b = cfg.block_size.unwrap_or(m.max(n).max(2));
        let rows = block_partition(m, b)?;
        let cols = block_partition(n, b)?;
        let mut blocks = Vec::with_capacity(rows.len() * cols.len());
        for r in &rows {
            for c in &cols {
                blocks.push(Preconditioner::new(kind, r.len(), c.len(), cfg)?);
            }
        }
        Ok(BlockedPreconditioner {
            rows,
            cols,
            blocks,
            shape: (m, n),
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Steps every block on its slice of `g`. Diagnostics keep the largest
    /// `t` values and residual over blocks and sum the counters.
    pub fn step(&mut self, g: &DenseMatrix) -> Result<(DenseMatrix, StepDiagnostics)> {
        if g.shape() != self.shape {
            return Err(Error::shape(format!(
                "gradient {:?} for a blocked {:?} preconditioner",
                g.shape(),
                self.shape
            )));
        }
        let mut out = DenseMatrix::zeros(self.shape.0, self.shape.1, g.precision());
        let mut agg = StepDiagnostics::default();
        let mut idx = 0;
        for r in &self.rows {
            for c in &self.cols {
                let gb = g.block(r.start, c.start, r.len(), c.len());
                let (d, diag) = self.blocks[idx].step(&gb)?;
                out.set_block(r.start, c.start, &d)?;
                agg.t_l = agg.t_l.max(diag.t_l);
                agg.t_r = agg.t_r.max(diag.t_r);
                agg.middle_norm = agg.middle_norm.max(diag.middle_norm);
                if diag.root_residual.is_finite() {
                    agg.root_residual = if agg.root_residual.is_finite() {
                        agg.root_residual.max(diag.root_residual)
                    } else {
                        diag.root_residual
                    };
                }
                agg.root_iters += diag.root_iters;
                agg.floor_hits += diag.floor_hits;
                agg.refreshed |= diag.refreshed;
                idx += 1;
            }
        }
        Ok((out, agg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Precision;

    #[test]
    fn partitions() {
        assert_eq!(block_partition(5, 2).unwrap(), vec![0..2, 2..4, 4..5]);
        assert_eq!(block_partition(4, 4).unwrap(), vec![0..4]);
        assert!(block_partition(4, 1).is_err());
    }

    #[test]
    fn single_block_matches_unblocked() {
        let cfg = PrecondConfig { block_size: Some(4), update_interval: 2, ..Default::default() };
        let mut blocked = BlockedPreconditioner::new(PrecondKind::KradStar, 4, 4, cfg).unwrap();
        let mut plain = Preconditioner::new(PrecondKind::KradStar, 4, 4, cfg).unwrap();
        assert_eq!(blocked.num_blocks(), 1);
        for k in 0..5 {
            let g = DenseMatrix::from_vec(
                4,
                4,
                (0..16).map(|i| ((i * (k + 3)) % 7) as f64 / 7.0 - 0.4).collect(),
                Precision::F64,
            )
            .unwrap();
            let (a, _) = blocked.step(&g).unwrap();
            let (b, _) = plain.step(&g).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-12);
        }
    }
}
