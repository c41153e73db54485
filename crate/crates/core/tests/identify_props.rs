use bribery_core::identify::*;
use proptest::prelude::*;

fn table(v: [(f64, f64); 3]) -> CoefficientTable {
    let mut t = CoefficientTable::default();
    for (name, (e, s)) in ["one_ns", "swc_lambda", "swc_g"].iter().zip(v) {
        t.insert(name, e, s);
    }
    t
}

fn coef() -> impl Strategy<Value = (f64, f64)> {
    (-5.0f64..5.0, 0.01f64..3.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn verdict_is_the_unique_matching_pattern(a in coef(), b in coef(), c in coef(), alpha in 0.001f64..0.3) {
        let v = classify_scenario(&table([a, b, c]), alpha).unwrap();
        let matching: Vec<_> = v
            .patterns
            .iter()
            .filter(|(_, p)| p.iter().zip(&v.restrictions).all(|(req, r)| req.holds(r.t, alpha)))
            .map(|(s, _)| Verdict::Scenario(*s))
            .collect();
        match matching.as_slice() {
            [only] => prop_assert_eq!(v.verdict, *only),
            _ => prop_assert_eq!(v.verdict, Verdict::Inconclusive),
        }
        let observed: Vec<Sign> = v.restrictions.iter().map(|r| r.observed).collect();
        for (s, p) in &v.patterns {
            if p.as_slice() == observed.as_slice() {
                prop_assert!(matching.contains(&Verdict::Scenario(*s)));
            }
        }
    }

    #[test]
    fn requirements_are_monotone_in_alpha(t in -5.0f64..5.0, a1 in 0.001f64..0.5, gap in 0.0f64..0.4) {
        let a2 = (a1 + gap).min(0.99);
        for s in [Sign::Positive, Sign::Negative] {
            if s.holds(t, a1) { prop_assert!(s.holds(t, a2)); }
        }
        if Sign::Zero.holds(t, a2) { prop_assert!(Sign::Zero.holds(t, a1)); }
    }

    #[test]
    fn rejections_persist_at_larger_alpha(e in -5.0f64..5.0, se in 0.01f64..3.0,
                                          a1 in 0.001f64..0.5, gap in 0.0f64..0.4) {
        let a2 = (a1 + gap).min(0.99);
        let (s1, s2) = (sign_at(e, se, a1), sign_at(e, se, a2));
        if s1 == Sign::Positive { prop_assert_eq!(s2, Sign::Positive); }
        if s1 == Sign::Negative { prop_assert_eq!(s2, Sign::Negative); }
    }
}
