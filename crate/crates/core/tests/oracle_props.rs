use bribery_core::equilibrium::*;
use bribery_core::oracle::*;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ModelParams> {
    any::<u64>().prop_map(|seed| random_valid_params(seed, 1).remove(0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn closed_forms_never_violate_constraints(p in params()) {
        for s in Scenario::ALL {
            let m = solve_scenario(&p, s).unwrap().menus;
            let r = check_constraints(&p, s, &m);
            prop_assert!(r.all_satisfied(), "{r}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn refinement_is_monotone(p in params()) {
        let grid = GridSpec::aligned(&p, 40);
        let fine = grid.refined();
        for s in Scenario::ALL {
            let a = compare_with_closed_form(&p, s, &grid, 0.5).unwrap();
            let b = compare_with_closed_form(&p, s, &fine, 0.5).unwrap();
            let tol = 1e-9 * a.closed_objective.abs().max(1.0);
            prop_assert!(b.grid_objective >= a.grid_objective - tol, "{s}");
            // The gap may wobble by at most one fine cell.
            for ((name, da, _), (_, db, allowed)) in a.deviations.iter().zip(&b.deviations) {
                prop_assert!(*db <= da + allowed, "{s} {name}: {db} > {da} + {allowed}");
            }
            prop_assert!(b.passed(), "{s}\n{b}");
        }
    }
}
