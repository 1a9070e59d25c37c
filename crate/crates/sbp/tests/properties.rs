use proptest::prelude::*;
use sbp::instance::{brute_force, gen_instance, is_feasible_sign, SbpInstance};
use sbp::numerics::{gauss_hermite_rule, log_erfc_diff_half};

fn rows_of(inst: &SbpInstance) -> Vec<Vec<f64>> {
    (0..inst.m).map(|j| inst.row(j).to_vec()).collect()
}

fn double_factorial_odd(k: u32) -> f64 {
    (1..=k).step_by(2).map(f64::from).product()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn erfc_difference_grows_with_the_interval(a in -30.0f64..30.0, w1 in 1e-6f64..5.0, w2 in 1e-6f64..5.0) {
        let (short, long) = (w1.min(w2), w1.max(w2));
        let f_short = log_erfc_diff_half(a, a + short).unwrap();
        let f_long = log_erfc_diff_half(a, a + long).unwrap();
        prop_assert!(f_short <= f_long + 1e-12 * f_long.abs().max(1.0));
        prop_assert!(f_long <= 1e-15);
    }

    #[test]
    fn hermite_rule_is_exact_on_polynomials(order in 2usize..40, coef in prop::collection::vec(-1.0f64..1.0, 1..80)) {
        let rule = gauss_hermite_rule(order).unwrap();
        let degree = (2 * order - 1).min(coef.len() - 1);
        let poly = |z: f64| coef[..=degree].iter().rev().fold(0.0, |acc, c| acc * z + c);
        let got: f64 = rule.nodes.iter().zip(&rule.weights).map(|(z, w)| w * poly(*z)).sum();
        let want: f64 = coef[..=degree]
            .iter()
            .enumerate()
            .filter(|(k, _)| k % 2 == 0)
            .map(|(k, c)| c * double_factorial_odd(k as u32))
            .sum();
        let scale: f64 = coef[..=degree]
            .iter()
            .enumerate()
            .map(|(k, c)| c.abs() * double_factorial_odd(2 * (k as u32 / 2)))
            .sum();
        prop_assert!((got - want).abs() <= 1e-10 * scale.max(1.0), "got {got}, want {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_ignores_row_order_and_row_signs(n in 4usize..11, alpha in 0.5f64..2.0, seed in 0u64..10_000, flips in prop::collection::vec(any::<bool>(), 20), shift in 0usize..20) {
        let inst = gen_instance(n, alpha, 1.0, seed).unwrap();
        let base = brute_force(&inst).unwrap().xi_star;
        let mut rows = rows_of(&inst);
        rows.rotate_left(shift % inst.m);
        for (row, flip) in rows.iter_mut().zip(flips.iter().cycle()) {
            if *flip {
                row.iter_mut().for_each(|g| *g = -*g);
            }
        }
        let moved = SbpInstance::from_rows(&rows, 1.0).unwrap();
        let xi = brute_force(&moved).unwrap().xi_star;
        prop_assert!((xi - base).abs() <= 1e-12 * base.max(1.0), "{xi} vs {base}");
    }

    #[test]
    fn oracle_ignores_column_sign_flips(n in 4usize..11, alpha in 0.5f64..2.0, seed in 0u64..10_000, col in 0usize..10) {
        let inst = gen_instance(n, alpha, 1.0, seed).unwrap();
        let base = brute_force(&inst).unwrap();
        let col = col % n;
        let mut rows = rows_of(&inst);
        for row in rows.iter_mut() {
            row[col] = -row[col];
        }
        let flipped = SbpInstance::from_rows(&rows, 1.0).unwrap();
        let mut sign = base.argmin_sign.clone();
        sign[col] = -sign[col];
        let (_, k) = is_feasible_sign(&sign, &flipped).unwrap();
        prop_assert!((k - base.xi_star).abs() <= 1e-12 * base.xi_star.max(1.0));
        let xi = brute_force(&flipped).unwrap().xi_star;
        prop_assert!((xi - base.xi_star).abs() <= 1e-12 * base.xi_star.max(1.0));
    }

    #[test]
    fn brute_force_is_minimal_and_feasibility_is_monotone(
        n in 4usize..13,
        alpha in 0.5f64..2.0,
        seed in 0u64..10_000,
        bits in prop::collection::vec(any::<bool>(), 12),
        k1 in 0.1f64..3.0,
        k2 in 0.1f64..3.0,
    ) {
        let inst = gen_instance(n, alpha, 1.0, seed).unwrap();
        let best = brute_force(&inst).unwrap();
        let sign: Vec<i8> = bits[..n].iter().map(|b| if *b { 1 } else { -1 }).collect();
        let (_, k) = is_feasible_sign(&sign, &inst).unwrap();
        prop_assert!(k >= best.xi_star - 1e-12);
        let (lo, hi) = (k1.min(k2), k1.max(k2));
        let at = |kappa: f64| {
            let mut i = inst.clone();
            i.kappa = kappa;
            is_feasible_sign(&sign, &i).unwrap().0
        };
        prop_assert!(!at(lo) || at(hi));
    }
}
