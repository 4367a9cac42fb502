use proptest::prelude::*;

use krad_core::bench::{bench_rng, gaussian, spd_with_condition};
use krad_core::linalg::min_eigenvalue;
use krad_core::roots::{inv_proot, matrix_power, normalize, proot, root_eig, RootConfig, RootIterState, RootMethod};
use krad_core::Precision;

const F64: Precision = Precision::F64;

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn coupling_invariant_holds_every_iteration(n in 2usize..=32, k in 0usize..3, p in prop::sample::select(vec![2u32, 4, 8]), seed in any::<u64>()) {
        let a = spd_with_condition(n, [1e2, 1e4, 1e6][k], seed).unwrap();
        let (a_hat, _) = normalize(&a).unwrap();
        let mut st = RootIterState::cold(&a_hat, p).unwrap();
        while st.residual > 1e-12 && st.iter < 100 {
            st.step().unwrap();
            prop_assert!(st.invariant_gap(&a_hat).unwrap() <= 1e-8 * a_hat.frob_norm());
        }
    }

    #[test]
    fn newton_and_eig_agree(n in 2usize..=32, k in 0usize..4, inverse in any::<bool>(), seed in any::<u64>()) {
        let a = spd_with_condition(n, [1e2, 1e4, 1e6, 1e8][k], seed).unwrap();
        for p in [2u32, 4] {
            let cfg = RootConfig::for_precision(F64);
            let cn = matrix_power(&a, p, inverse, &cfg, None).unwrap().matrix;
            let eig = matrix_power(&a, p, inverse, &cfg.with_method(RootMethod::Eig), None).unwrap().matrix;
            let rel = cn.sub(&eig).unwrap().frob_norm() / eig.frob_norm();
            prop_assert!(rel <= 1e-8, "p {} inverse {} rel {:e}", p, inverse, rel);
        }
    }

    #[test]
    fn f32_positive_root_tolerates_ill_conditioning(n in 2usize..=32, k in 0usize..4, seed in any::<u64>()) {
        let a = spd_with_condition(n, [1e2, 1e4, 1e6, 1e8][k], seed).unwrap();
        for p in [2u32, 4] {
            let (x, _) = proot(&a.with_precision(Precision::F32), p, &RootConfig::for_precision(Precision::F32), None).unwrap();
            let x = x.with_precision(F64);
            let xp = (1..p).fold(x.clone(), |acc, _| acc.matmul(&x).unwrap());
            prop_assert!(xp.sub(&a).unwrap().frob_norm() / a.frob_norm() <= 1e-3);
        }
    }
}

#[test]
fn f32_root_of_an_input_rounded_to_indefinite() {
    // κ = 1e8 is past what f32 storage resolves; without the shift one of
    // these diverged and the other converged to a wrong root.
    for (n, seed) in [(24, 13289996077091873036), (2, 736468)] {
        let a = spd_with_condition(n, 1e8, seed).unwrap();
        for p in [2u32, 4] {
            let (x, _) = proot(&a.with_precision(Precision::F32), p, &RootConfig::for_precision(Precision::F32), None).unwrap();
            let x = x.with_precision(F64);
            let xp = (1..p).fold(x.clone(), |acc, _| acc.matmul(&x).unwrap());
            assert!(xp.sub(&a).unwrap().frob_norm() / a.frob_norm() <= 1e-3);
        }
    }
}

#[test]
fn warm_start_beats_cold_after_a_rank_one_bump() {
    let mut rng = bench_rng(11);
    let mut fewer = 0;
    for i in 0..100 {
        let n = 2 + i % 31;
        let a = spd_with_condition(n, [1e2, 1e4, 1e6][i % 3], 100 + i as u64).unwrap();
        let g = gaussian(n, 1, &mut rng);
        let g = g.scale(1.0 / g.frob_norm());
        let eps = 0.1 * min_eigenvalue(&a).unwrap();
        let a2 = a.add(&g.matmul_t(&g).unwrap().scale(eps)).unwrap();
        let cfg = RootConfig::for_precision(F64);
        let (_, prev) = inv_proot(&a, 4, &cfg, None).unwrap();
        let (_, cold) = inv_proot(&a2, 4, &cfg, None).unwrap();
        let (_, warm) = inv_proot(&a2, 4, &cfg, Some(&prev)).unwrap();
        fewer += usize::from(warm.iter < cold.iter);
    }
    assert!(fewer >= 90, "{fewer}/100");
}

#[test]
fn f32_inverse_root_degrades_with_conditioning() {
    // Reported rather than bounded: the inverse root has no product with A to
    // hide its error in the small-eigenvalue directions.
    for cond in [1e2, 1e4, 1e6, 1e8] {
        let a = spd_with_condition(16, cond, 5).unwrap();
        let exact = root_eig(&a, -0.25).unwrap();
        let cfg = RootConfig::for_precision(Precision::F32);
        let rel = match inv_proot(&a.with_precision(Precision::F32), 4, &cfg, None) {
            Ok((x, _)) => x.with_precision(F64).sub(&exact).unwrap().frob_norm() / exact.frob_norm(),
            Err(e) => {
                println!("cond {cond:e}: {e}");
                continue;
            }
        };
        println!("cond {cond:e}: f32 inverse fourth root relative error {rel:.3e}");
    }
}
