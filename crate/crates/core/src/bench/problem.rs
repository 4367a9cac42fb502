use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Precision};

/// The generator behind every benchmark draw: ChaCha with 8 rounds, seeded
/// through `seed_from_u64`.
pub fn bench_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `rows x cols` matrix of i.i.d. standard normals, drawn row by row.
pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::from_vec(rows, cols, data, Precision::F64).expect("finite normal draws")
}

/// `Q` of a Householder QR of a square `a`, with columns signed so that
/// `R` has a nonnegative diagonal.
pub fn householder_q(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::shape("QR of a non-square matrix"));
    }
    let n = a.rows();
    let mut r = a.with_precision(Precision::F64).to_vec();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let norm = (k..n).map(|i| r[i * n + k].powi(2)).sum::<f64>().sqrt();
        let mut v: Vec<f64> = (k..n).map(|i| r[i * n + k]).collect();
        if norm == 0.0 {
            vs.push(vec![0.0; n - k]);
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vn > 0.0 {
            v.iter_mut().for_each(|x| *x /= vn);
        }
        for j in k..n {
            let d: f64 = (k..n).map(|i| v[i - k] * r[i * n + j]).sum();
            for i in k..n {
                r[i * n + j] -= 2.0 * v[i - k] * d;
            }
        }
        vs.push(v);
    }
    // Q = H_0 H_1 ... H_{n-1}, applied to the identity from the right end.
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    for k in (0..n).rev() {
        let v = &vs[k];
        for j in 0..n {
            let d: f64 = (k..n).map(|i| v[i - k] * q[i * n + j]).sum();
            for i in k..n {
                q[i * n + j] -= 2.0 * v[i - k] * d;
            }
        }
    }
    for j in 0..n {
        if r[j * n + j] < 0.0 {
            for i in 0..n {
                q[i * n + j] = -q[i * n + j];
            }
        }
    }
    DenseMatrix::from_vec(n, n, q, Precision::F64)
}

/// `λ_i = 10^{(√10 − √10 (i−1)/n)²}` for `i = 1..n`, so `κ = 10^{10 − 10/n²}`
/// rounded to `10¹⁰` at benchmark sizes.
pub fn spectrum(n: usize) -> Vec<f64> {
    let s = 10f64.sqrt();
    (1..=n)
        .map(|i| 10f64.powf((s - s * (i - 1) as f64 / n as f64).powi(2)))
        .collect()
}

fn spd_from(n: usize, rng: &mut impl Rng) -> Result<DenseMatrix> {
    let u = householder_q(&gaussian(n, n, rng))?;
    let scaled = u.matmul(&DenseMatrix::from_diag(&spectrum(n), Precision::F64))?;
    Ok(scaled.matmul_t(&u)?.symmetrize())
}

/// `U Λ Uᵀ` with a random orthonormal `U` and the [`spectrum`] eigenvalues.
pub fn gen_spd_illconditioned(n: usize, seed: u64) -> Result<DenseMatrix> {
    if n < 2 {
        return Err(Error::Argument(format!("ill-conditioned SPD needs n >= 2, got {n}")));
    }
    spd_from(n, &mut bench_rng(seed))
}

/// `Q diag(λ) Qᵀ` with geometrically spaced `λ` from `1` down to `1 / cond`.
pub fn spd_with_condition(n: usize, cond: f64, seed: u64) -> Result<DenseMatrix> {
    if n == 0 || !(cond >= 1.0 && cond.is_finite()) {
        return Err(Error::Argument(format!("SPD of size {n} with condition number {cond}")));
    }
    let q = householder_q(&gaussian(n, n, &mut bench_rng(seed)))?;
    let lam: Vec<f64> = (0..n)
        .map(|i| if n == 1 { 1.0 } else { cond.powf(-(i as f64) / (n - 1) as f64) })
        .collect();
    Ok(q.matmul(&DenseMatrix::from_diag(&lam, Precision::F64))?.matmul_t(&q)?.symmetrize())
}

/// `min tr(Xᵀ A X B)` with `A`, `B` from [`gen_spd_illconditioned`] and a
/// unit-norm Gaussian start.
#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub x0: DenseMatrix,
    pub seed: u64,
}

impl SyntheticProblem {
    /// `A`, `B` and `X₀` are drawn in that order from one seeded stream.
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Argument(format!("quadratic problem needs n >= 2, got {n}")));
        }
        let mut rng = bench_rng(seed);
        let a = spd_from(n, &mut rng)?;
        let b = spd_from(n, &mut rng)?;
        let x = gaussian(n, n, &mut rng);
        let x0 = x.scale(1.0 / x.frob_norm());
        Ok(SyntheticProblem { a, b, x0, seed })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }
}

fn check_x(prob: &SyntheticProblem, x: &DenseMatrix) -> Result<()> {
    if x.shape() != (prob.a.rows(), prob.b.rows()) {
        return Err(Error::shape(format!(
            "iterate {:?} for a {}x{} problem",
            x.shape(),
            prob.a.rows(),
            prob.b.rows()
        )));
    }
    Ok(())
}

/// `tr(Xᵀ A X B)`, always evaluated in `f64`.
pub fn quad_loss(prob: &SyntheticProblem, x: &DenseMatrix) -> Result<f64> {
    check_x(prob, x)?;
    let x = x.with_precision(Precision::F64);
    x.dot(&prob.a.matmul(&x)?.matmul(&prob.b)?)
}

/// `A X B + Aᵀ X Bᵀ` in the precision of `x`.
pub fn quad_grad(prob: &SyntheticProblem, x: &DenseMatrix) -> Result<DenseMatrix> {
    check_x(prob, x)?;
    let p = x.precision();
    let (a, b) = (prob.a.with_precision(p), prob.b.with_precision(p));
    let g = a.matmul(x)?.matmul(&b)?;
    if a.is_symmetric(0.0) && b.is_symmetric(0.0) {
        return Ok(g.scale(2.0));
    }
    g.add(&a.t_matmul(x)?.matmul_t(&b)?)
}

/// One least-squares minibatch `f(w) = ‖X w − y‖² / (2 · batch)`.
#[derive(Debug, Clone)]
pub struct LsqBatch {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
}

impl LsqBatch {
    fn check(&self, w: &DenseMatrix) -> Result<()> {
        if w.shape() != (self.x.cols(), 1) {
            return Err(Error::shape(format!("weights {:?} for {} features", w.shape(), self.x.cols())));
        }
        Ok(())
    }

    pub fn loss(&self, w: &DenseMatrix) -> Result<f64> {
        self.check(w)?;
        let r = self.x.matmul(&w.with_precision(Precision::F64))?.sub(&self.y)?;
        let f = r.frob_norm();
        Ok(f * f / (2.0 * self.x.rows() as f64))
    }

    /// `Xᵀ (X w − y) / batch`, in the precision of `w`.
    pub fn grad(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        self.check(w)?;
        let p = w.precision();
        let x = self.x.with_precision(p);
        let r = x.matmul(w)?.sub(&self.y.with_precision(p))?;
        Ok(x.t_matmul(&r)?.scale(1.0 / self.x.rows() as f64))
    }
}

/// Endless stream of i.i.d. least-squares batches around a fixed `w*`.
#[derive(Debug, Clone)]
pub struct LsqStream {
    pub w_star: DenseMatrix,
    pub batch: usize,
    pub noise: f64,
    rng: ChaCha8Rng,
}

impl Iterator for LsqStream {
    type Item = LsqBatch;

    fn next(&mut self) -> Option<LsqBatch> {
        let x = gaussian(self.batch, self.w_star.rows(), &mut self.rng);
        let e = gaussian(self.batch, 1, &mut self.rng);
        let y = x
            .matmul(&self.w_star)
            .and_then(|y| y.axpby(1.0, &e, self.noise))
            .expect("shapes agree by construction");
        Some(LsqBatch { x, y })
    }
}

/// Standard-normal features, `w* ~ N(0, I/n)` and Gaussian label noise of
/// the given scale.
pub fn stochastic_lsq(n: usize, batch: usize, noise: f64, seed: u64) -> Result<LsqStream> {
    if n == 0 || n > 64 {
        return Err(Error::Argument(format!("least-squares dimension must be in 1..=64, got {n}")));
    }
    if batch == 0 || !(noise >= 0.0) {
        return Err(Error::Argument("batch must be positive and noise nonnegative".into()));
    }
    let mut rng = bench_rng(seed);
    let w_star = gaussian(n, 1, &mut rng).scale(1.0 / (n as f64).sqrt());
    Ok(LsqStream { w_star, batch, noise, rng })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{min_eigenvalue, spec_norm};

    #[test]
    fn spectrum_values() {
        let s = spectrum(128);
        assert!((s[0] - 1e10).abs() / 1e10 < 1e-14);
        assert!((s[127] - 1.001_406).abs() < 1e-6);
        assert!((s[64] - 10f64.powf(2.5)).abs() < 1e-9);
    }

    #[test]
    fn q_is_orthonormal_and_sign_fixed() {
        let a = gaussian(12, 12, &mut bench_rng(3));
        let q = householder_q(&a).unwrap();
        let gap = q.t_matmul(&q).unwrap().sub(&DenseMatrix::identity(12, Precision::F64)).unwrap();
        assert!(gap.frob_norm() <= 1e-12);
        let r = q.t_matmul(&a).unwrap();
        for i in 0..12 {
            assert!(r.get(i, i) >= 0.0);
        }
    }

    #[test]
    fn condition_number_of_generated_matrix() {
        let a = gen_spd_illconditioned(24, 1).unwrap();
        let kappa = spec_norm(&a).unwrap() / min_eigenvalue(&a).unwrap();
        let expect = spectrum(24)[0] / spectrum(24)[23];
        assert!((kappa / expect - 1.0).abs() < 1e-2);
    }

    #[test]
    fn quadratic_identity_case() {
        let p = SyntheticProblem {
            a: DenseMatrix::identity(3, Precision::F64),
            b: DenseMatrix::identity(3, Precision::F64),
            x0: DenseMatrix::zeros(3, 3, Precision::F64),
            seed: 0,
        };
        let x = DenseMatrix::from_vec(3, 3, (0..9).map(|i| i as f64 - 4.0).collect(), Precision::F64).unwrap();
        assert!((quad_loss(&p, &x).unwrap() - x.frob_norm().powi(2)).abs() < 1e-12);
        assert_eq!(quad_grad(&p, &x).unwrap(), x.scale(2.0));
        assert_eq!(quad_loss(&p, &p.x0).unwrap(), 0.0);
    }

    #[test]
    fn lsq_stream_is_reproducible() {
        let a: Vec<_> = stochastic_lsq(4, 3, 0.1, 9).unwrap().take(3).map(|b| b.y).collect();
        let b: Vec<_> = stochastic_lsq(4, 3, 0.1, 9).unwrap().take(3).map(|b| b.y).collect();
        assert_eq!(a, b);
        assert!(stochastic_lsq(65, 3, 0.1, 9).is_err());
    }
}
