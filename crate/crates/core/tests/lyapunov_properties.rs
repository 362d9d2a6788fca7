//! Property tests for the generator and the Lyapunov checks.

mod support;

use blowuplab::expr::Expr;
use blowuplab::lyapunov::{generator_apply, symmetric_eigenvalues};
use blowuplab::model::{LyapunovCandidate, SdeModel, StateDomain};
use proptest::prelude::*;
use support::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn generator_linearity(case in linearity_case()) {
        generator_is_linear(case)?;
    }

    #[test]
    fn log_norm_generator_matches_closed_form(case in log_norm_case()) {
        log_norm_generator_identity(case)?;
    }

    #[test]
    fn zero_size_jumps(case in point_mass_case()) {
        zero_jumps_change_nothing(case)?;
    }

    #[test]
    fn eigenvalue_sandwich(case in symmetric_matrix()) {
        eigenvalues_sandwich_quadratic_form(case)?;
    }

    #[test]
    fn constant_candidate_has_zero_generator(c in -5.0f64..5.0, mi in 0usize..3, x in prop::collection::vec(-4.0f64..4.0, 2)) {
        let m = &planar_models()[mi];
        let cand = LyapunovCandidate::user("constant", Expr::constant(c));
        prop_assert_eq!(generator_apply(m, &cand).unwrap().value_at(&x), 0.0);
    }

    #[test]
    fn reciprocal_generator_under_power_drift(alpha in 0.5f64..4.0, x in 0.05f64..50.0) {
        let m = SdeModel::scalar(&format!("x^(-{alpha})"), "1")
            .unwrap()
            .with_domain(StateDomain::PositiveHalfLine)
            .unwrap();
        let cand = LyapunovCandidate::user("reciprocal", Expr::parse("1/x").unwrap());
        let lv = generator_apply(&m, &cand).unwrap().value_at(&[x]);
        let exact = -x.powf(-2.0 - alpha) + x.powi(-3);
        let scale = x.powf(-2.0 - alpha) + x.powi(-3);
        prop_assert!((lv - exact).abs() <= 1e-12 * scale, "{} vs {}", lv, exact);
    }

    #[test]
    fn eigenvalues_of_diagonal_matrices(d in prop::collection::vec(-100.0f64..100.0, 1..5)) {
        let n = d.len();
        let mut a = vec![0.0; n * n];
        for (i, v) in d.iter().enumerate() {
            a[i * n + i] = *v;
        }
        let mut sorted = d.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(symmetric_eigenvalues(&a, n).unwrap(), sorted);
    }
}
