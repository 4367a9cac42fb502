use proptest::prelude::*;

use krad_core::bench::{bench_rng, gaussian};
use krad_core::classic::{adam_step, diag_adagrad_step, full_adagrad_step, sgd_step, FullAdagradState, OptimizerConfig};
use krad_core::linalg::min_eigenvalue;
use krad_core::{DenseMatrix, Precision};

fn cfg(prec: Precision) -> OptimizerConfig {
    OptimizerConfig { lr: 0.1, momentum: 0.5, precision: prec, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn diag_steps_shrink_under_a_constant_gradient(m in 1usize..5, n in 1usize..5, seed in any::<u64>()) {
        let g = gaussian(m, n, &mut bench_rng(seed));
        let c = cfg(Precision::F64);
        let mut w = DenseMatrix::zeros(m, n, Precision::F64);
        let mut acc = w.clone();
        let mut prev: Option<DenseMatrix> = None;
        for _ in 0..20 {
            let (next, a) = diag_adagrad_step(&w, &g, &c, &acc).unwrap();
            let step = next.sub(&w).unwrap();
            if let Some(p) = &prev {
                for (s, q) in step.to_vec().iter().zip(p.to_vec()) {
                    prop_assert!(s.abs() <= q.abs());
                }
            }
            prev = Some(step);
            w = next;
            acc = a;
        }
    }

    #[test]
    fn full_statistic_is_psd_nondecreasing(m in 1usize..4, n in 1usize..4, seed in any::<u64>()) {
        let c = cfg(Precision::F64);
        let mut rng = bench_rng(seed);
        let mut st = FullAdagradState::new(m * n, 1e-4, Precision::F64).unwrap();
        let mut w = DenseMatrix::zeros(m, n, Precision::F64);
        for _ in 0..10 {
            let g = gaussian(m, n, &mut rng);
            let (nw, ns) = full_adagrad_step(&w, &g, &c, &st).unwrap();
            prop_assert!(min_eigenvalue(&ns.s.sub(&st.s).unwrap()).unwrap() >= -1e-12);
            w = nw;
            st = ns;
        }
        prop_assert!(min_eigenvalue(&st.s).unwrap() >= -1e-12);
    }

    #[test]
    fn steppers_are_pure(m in 1usize..4, n in 1usize..4, seed in any::<u64>(), f32_path in any::<bool>()) {
        let prec = if f32_path { Precision::F32 } else { Precision::F64 };
        let c = cfg(prec);
        let mut rng = bench_rng(seed);
        let w = gaussian(m, n, &mut rng).with_precision(prec);
        let g = gaussian(m, n, &mut rng).with_precision(prec);
        let z = DenseMatrix::zeros(m, n, prec);
        prop_assert_eq!(sgd_step(&w, &g, &c, &z).unwrap(), sgd_step(&w, &g, &c, &z).unwrap());
        prop_assert_eq!(adam_step(&w, &g, &c, &z, &z, 3).unwrap(), adam_step(&w, &g, &c, &z, &z, 3).unwrap());
        prop_assert_eq!(diag_adagrad_step(&w, &g, &c, &z).unwrap(), diag_adagrad_step(&w, &g, &c, &z).unwrap());
        let st = FullAdagradState::new(m * n, 1e-4, prec).unwrap();
        prop_assert_eq!(full_adagrad_step(&w, &g, &c, &st).unwrap(), full_adagrad_step(&w, &g, &c, &st).unwrap());
    }
}
