use proptest::prelude::*;

use slowfast_core::experiments::sup_error_path;
use slowfast_core::integrators::{
    simulate_slow_fast, PathSeed, RecordOptions, SimulationConfig, SystemNoise, Trajectory,
};
use slowfast_core::registry::{example, BURGERS_OU_LEVY, HEAT};
use slowfast_core::spectral::{build_basis, SpectralField};

fn trajectory(rows: &[Vec<f64>]) -> Trajectory {
    let mut t = Trajectory::new(0.1, &SpectralField::new(rows[0].clone()));
    for r in &rows[1..] {
        t.push(&SpectralField::new(r.clone()));
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sup_error_is_monotone_in_p(rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 2..8),
                                  p in 2.0f64..6.0, dp in 0.1f64..2.0) {
        let zero = trajectory(&vec![vec![0.0; 3]; rows.len()]);
        let diff = trajectory(&rows);
        let lo = sup_error_path(&diff, &zero, p).unwrap();
        let hi = sup_error_path(&diff, &zero, p + dp).unwrap();
        let sup = lo.powf(1.0 / p);
        if sup >= 1.0 {
            prop_assert!(hi >= lo * (1.0 - 1e-12));
        } else {
            prop_assert!(hi <= lo * (1.0 + 1e-12));
        }
    }

    #[test]
    fn delta_alignment_rule(k in 1usize..50, dt_exp in 2i32..5) {
        let dt = 10f64.powi(-dt_exp);
        let mut cfg = SimulationConfig::new(0.5, dt, 1.0, 4);
        cfg.delta = k as f64 * dt;
        prop_assert!(cfg.validate().is_ok());
        cfg.delta = (k as f64 + 0.5) * dt;
        prop_assert!(cfg.validate().is_err());
    }

    #[test]
    fn same_seed_same_path(master in any::<u64>(), path in 0u64..1000) {
        let n = 4;
        let ex = example(BURGERS_OU_LEVY, n).unwrap();
        let basis = build_basis(n, 2 * n + 1).unwrap();
        let cfg = SimulationConfig::new(0.05, 1e-2, 0.2, n);
        let seed = PathSeed { master, path };
        let run = || simulate_slow_fast(&ex.x0, &ex.y0, &ex.coeffs, &ex.noise, &cfg, &basis, seed,
                                        RecordOptions::default()).unwrap();
        let (a, b) = (run(), run());
        prop_assert_eq!(a.x, b.x);
        prop_assert_eq!(a.y_final, b.y_final);
    }

    #[test]
    fn linear_skeleton_is_exact(coeffs in prop::collection::vec(-5.0f64..5.0, 6), steps in 1usize..200) {
        let n = 6;
        let ex = example(HEAT, n).unwrap();
        let basis = build_basis(n, 2 * n + 1).unwrap();
        let dt = 1e-3;
        let cfg = SimulationConfig::new(0.5, dt, steps as f64 * dt, n);
        let x0 = SpectralField::new(coeffs);
        let run = simulate_slow_fast(&x0, &SpectralField::zeros(n), &ex.coeffs, &SystemNoise::silent(n), &cfg,
                                     &basis, PathSeed { master: 0, path: 0 }, RecordOptions::default()).unwrap();
        for i in 0..run.x.len() {
            let exact = basis.semigroup_apply(&x0, run.x.time(i), 1.0);
            prop_assert!(run.x.field(i).distance(&exact) <= 1e-12);
        }
    }
}
