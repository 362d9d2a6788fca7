//! The Feller verdict does not depend on the anchor point.

use blowuplab::feller::classify_feller;
use blowuplab::model::SdeModel;
use blowuplab::Verdict;
use proptest::prelude::*;

const MODELS: [(&str, &str, Verdict); 5] = [
    ("x^2", "1", Verdict::PositiveProbabilityExplosion),
    ("x^2", "x^5", Verdict::AlmostSureNonExplosion),
    ("-x", "1", Verdict::AlmostSureNonExplosion),
    ("x^3", "1 + x^2", Verdict::PositiveProbabilityExplosion),
    ("x", "1", Verdict::AlmostSureNonExplosion),
];

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn verdict_is_anchor_invariant(i in 0usize..MODELS.len(), anchor in 0.3f64..3.0) {
        let (b, s, expected) = MODELS[i];
        let m = SdeModel::scalar(b, s).unwrap();
        let r = classify_feller(&m, Some(anchor)).unwrap();
        prop_assert_eq!(r.verdict, expected, "b = {}, sigma = {}, anchor {}", b, s, anchor);
    }
}
