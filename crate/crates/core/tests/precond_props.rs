use proptest::prelude::*;

use krad_core::bench::{bench_rng, gaussian};
use krad_core::linalg::min_eigenvalue;
use krad_core::precond::{
    apply_damping, kradalt_update, kradstar_update, shampoo_update, update_schedule, PrecondConfig, PrecondKind,
    PreconditionerState, UpdatePolicy,
};
use krad_core::DenseMatrix;

fn loewner_ge(a: &DenseMatrix, b: &DenseMatrix, tol: f64) -> bool {
    min_eigenvalue(&a.sub(b).unwrap()).unwrap() >= -tol * (1.0 + a.frob_norm())
}

fn dims() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..6, 1usize..6, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn krad_factors_only_shrink((m, n, seed) in dims(), alt in any::<bool>()) {
        let cfg = PrecondConfig::default();
        let kind = if alt { PrecondKind::KradAlt } else { PrecondKind::KradStar };
        let mut st = PreconditionerState::new(kind, m, n, &cfg).unwrap();
        let mut rng = bench_rng(seed);
        for k in 1..=20 {
            let g = gaussian(m, n, &mut rng);
            let (l0, r0) = (st.l.clone(), st.r.clone());
            if alt {
                kradalt_update(&mut st, &g, update_schedule(k, cfg.policy), &cfg).unwrap();
            } else {
                kradstar_update(&mut st, &g, &cfg).unwrap();
            }
            prop_assert!(loewner_ge(&l0, &st.l, 1e-12));
            prop_assert!(loewner_ge(&r0, &st.r, 1e-12));
            prop_assert!(min_eigenvalue(&st.l).unwrap() > 0.0);
            prop_assert!(min_eigenvalue(&st.r).unwrap() > 0.0);
        }
    }

    #[test]
    fn shampoo_statistics_only_grow((m, n, seed) in dims()) {
        let cfg = PrecondConfig::default();
        let mut st = PreconditionerState::new(PrecondKind::Shampoo, m, n, &cfg).unwrap();
        let mut rng = bench_rng(seed);
        for _ in 0..20 {
            let (l0, r0) = (st.l.clone(), st.r.clone());
            shampoo_update(&mut st, &gaussian(m, n, &mut rng)).unwrap();
            prop_assert!(loewner_ge(&st.l, &l0, 1e-12));
            prop_assert!(loewner_ge(&st.r, &r0, 1e-12));
        }
    }

    #[test]
    fn damping_stays_below((m, n, seed) in dims(), frac in 0.0f64..0.99) {
        let cfg = PrecondConfig::default();
        let mut st = PreconditionerState::new(PrecondKind::KradStar, m, n, &cfg).unwrap();
        let mut rng = bench_rng(seed);
        for _ in 0..5 {
            kradstar_update(&mut st, &gaussian(m, n, &mut rng), &cfg).unwrap();
        }
        let top = krad_core::linalg::spec_norm(&st.l).unwrap();
        let damped = apply_damping(&st.l, frac / top).unwrap();
        prop_assert!(loewner_ge(&st.l, &damped, 1e-12));
        prop_assert!(min_eigenvalue(&damped).unwrap() >= 0.0);
    }

    #[test]
    fn snapshots_round_trip((m, n, seed) in dims(), kind in prop::sample::select(vec![PrecondKind::Shampoo, PrecondKind::KradStar, PrecondKind::KradAlt])) {
        let cfg = PrecondConfig::default();
        let mut st = PreconditionerState::new(kind, m, n, &cfg).unwrap();
        let mut rng = bench_rng(seed);
        for k in 1..=3 {
            let g = gaussian(m, n, &mut rng);
            match kind {
                PrecondKind::Shampoo => { shampoo_update(&mut st, &g).unwrap(); }
                PrecondKind::KradStar => { kradstar_update(&mut st, &g, &cfg).unwrap(); }
                PrecondKind::KradAlt => { kradalt_update(&mut st, &g, k % 2 == 1, &cfg).unwrap(); }
            }
            st.step = k;
        }
        let back = PreconditionerState::from_json(&st.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.snapshot(), st.snapshot());
    }
}

#[test]
fn schedules() {
    let left = |p| (1..=8).map(|k| update_schedule(k, p)).collect::<Vec<_>>();
    assert_eq!(left(UpdatePolicy::Alternate), [true, false, true, false, true, false, true, false]);
    assert_eq!(left(UpdatePolicy::RightEvery(3)), [true, true, false, true, true, false, true, true]);
    assert_eq!(left(UpdatePolicy::RightUpTo(3)), [false, false, false, true, true, true, true, true]);
}
