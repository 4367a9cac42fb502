use proptest::prelude::*;

use krad_core::bench::{bench_rng, gaussian};
use krad_core::linalg::{kron, mat_power_psd, sym_eig, sym_eig_with, EigMethod};
use krad_core::{DenseMatrix, Precision};

fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    gaussian(rows, cols, &mut bench_rng(seed))
}

fn random_spd(n: usize, seed: u64) -> DenseMatrix {
    let x = random(n, n, seed);
    let mut a = x.matmul_t(&x).unwrap();
    a.add_diag(0.1);
    a.symmetrize()
}

fn brute_kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (p, q) = b.shape();
    let mut out = DenseMatrix::zeros(a.rows() * p, a.cols() * q, Precision::F64);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            for k in 0..p {
                for l in 0..q {
                    out.set(i * p + k, j * q + l, a.get(i, j) * b.get(k, l));
                }
            }
        }
    }
    out
}

fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).unwrap().frob_norm() / b.frob_norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn psd_powers_compose(n in 1usize..10, seed in any::<u64>(), r in -1.0f64..1.0, s in -1.0f64..1.0) {
        let a = random_spd(n, seed);
        let lhs = mat_power_psd(&mat_power_psd(&a, r).unwrap(), s).unwrap();
        let rhs = mat_power_psd(&a, r * s).unwrap();
        prop_assert!(rel(&lhs, &rhs) <= 1e-10);
    }

    #[test]
    fn kron_identities(n in 2usize..4, seed in any::<u64>()) {
        let m = |k: u64| random(n, n, seed.wrapping_add(k));
        let (a, b, c, d) = (m(0), m(1), m(2), m(3));
        let ab = kron(&a, &b).unwrap();
        prop_assert!(ab.max_abs_diff(&brute_kron(&a, &b)) <= 1e-15);
        // trace, mixed product, distributivity, power, transpose
        prop_assert!((ab.trace() - a.trace() * b.trace()).abs() <= 1e-12 * (1.0 + ab.frob_norm()));
        let mixed = ab.matmul(&kron(&c, &d).unwrap()).unwrap();
        prop_assert!(rel(&mixed, &kron(&a.matmul(&c).unwrap(), &b.matmul(&d).unwrap()).unwrap()) <= 1e-12);
        let dist = kron(&a, &b.add(&c).unwrap()).unwrap();
        prop_assert!(rel(&dist, &ab.add(&kron(&a, &c).unwrap()).unwrap()) <= 1e-12);
        let sq = ab.matmul(&ab).unwrap();
        prop_assert!(rel(&sq, &kron(&a.matmul(&a).unwrap(), &b.matmul(&b).unwrap()).unwrap()) <= 1e-12);
        prop_assert_eq!(ab.transpose(), kron(&a.transpose(), &b.transpose()).unwrap());
    }

    #[test]
    fn eigenpairs_sorted_and_orthonormal(n in 1usize..40, seed in any::<u64>()) {
        let x = random(n, n, seed);
        let a = x.add(&x.transpose()).unwrap();
        for method in [EigMethod::Jacobi, EigMethod::Tridiagonal] {
            let e = sym_eig_with(&a, method).unwrap();
            prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            let v = &e.eigenvectors;
            let mut gram = v.t_matmul(v).unwrap();
            gram.add_diag(-1.0);
            prop_assert!(gram.frob_norm() <= 1e-12);
            prop_assert!(rel(&e.reconstruct().unwrap(), &a) <= 1e-12);
        }
    }

    #[test]
    fn f32_results_stay_f32(n in 1usize..12, seed in any::<u64>()) {
        let a = random(n, n, seed).with_precision(Precision::F32);
        let b = random(n, n, seed ^ 1).with_precision(Precision::F32);
        let outs = [
            a.matmul(&b).unwrap(),
            a.add(&b).unwrap(),
            a.scale(0.3),
            kron(&a, &b).unwrap(),
            sym_eig(&a).unwrap().eigenvectors,
        ];
        for o in outs {
            prop_assert_eq!(o.precision(), Precision::F32);
            prop_assert!(o.to_vec().iter().all(|&v| (v as f32) as f64 == v));
        }
    }
}
