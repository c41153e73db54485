use bribery_core::estimator::*;
use bribery_core::panelgen::{Design, SpecVariant};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Unbalanced random panel with firm effects; firm ids deliberately unsorted.
fn random_panel(seed: u64, firms: usize, k: usize) -> Design {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = Vec::new();
    for f in 0..firms {
        for _ in 0..rng.gen_range(3..7) {
            ids.push((f as u64 * 7919) % 101 + 1);
        }
    }
    let n = ids.len();
    let x = DMatrix::from_fn(n, k, |_, _| rng.gen_range(-3.0..3.0));
    let beta: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let y = DVector::from_fn(n, |i, _| {
        let fe = ids[i] as f64 * 0.37;
        (0..k).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + fe + rng.gen_range(-1.0..1.0)
    });
    Design {
        names: (0..k).map(|j| format!("x{j}")).collect(),
        x,
        y,
        firm_ids: ids,
        years: vec![0; n],
    }
}

fn spec() -> RegressionSpec {
    RegressionSpec::new(SpecVariant::Em11)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn within_matches_dummy_regression(seed in any::<u64>(), firms in 3usize..8, k in 1usize..5) {
        let d = random_panel(seed, firms, k);
        let fit = fit_within(&d, &spec().with_correction(ClusterCorrection::CR0)).unwrap();
        let lsdv = lsdv_oracle(&d, LsdvLimits::default()).unwrap();
        prop_assert!(lsdv.dropped.is_empty());
        for (name, b) in &lsdv.slopes {
            prop_assert!((fit.get(name).unwrap().estimate - b).abs() < 1e-8);
        }
    }

    #[test]
    fn absorbed_regressor_is_dropped_by_both(seed in any::<u64>(), firms in 3usize..8) {
        let mut d = random_panel(seed, firms, 2);
        let n = d.y.len();
        d.x = d.x.insert_column(2, 0.0);
        for i in 0..n {
            d.x[(i, 2)] = (d.firm_ids[i] % 5) as f64;
        }
        d.names.push("size".into());
        let fit = fit_within(&d, &spec()).unwrap();
        let lsdv = lsdv_oracle(&d, LsdvLimits::default()).unwrap();
        prop_assert_eq!(fit.not_identified(), vec!["size"]);
        prop_assert_eq!(lsdv.dropped, vec!["size".to_string()]);
        for (name, b) in &lsdv.slopes {
            prop_assert!((fit.get(name).unwrap().estimate - b).abs() < 1e-8);
        }
    }

    #[test]
    fn response_shift_moves_only_the_intercept(seed in any::<u64>(), shift in -100.0f64..100.0) {
        let d = random_panel(seed, 5, 3);
        let mut e = d.clone();
        e.y.add_scalar_mut(shift);
        let (a, b) = (fit_within(&d, &spec()).unwrap(), fit_within(&e, &spec()).unwrap());
        for (ca, cb) in a.coefficients.iter().zip(&b.coefficients) {
            if ca.name == "intercept" {
                prop_assert!((cb.estimate - ca.estimate - shift).abs() < 1e-9);
            } else {
                prop_assert!((ca.estimate - cb.estimate).abs() < 1e-10);
                prop_assert!((ca.se - cb.se).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn column_rescale_keeps_t_statistics(seed in any::<u64>(), k in 1e-3f64..1e3) {
        let d = random_panel(seed, 6, 3);
        let mut e = d.clone();
        e.x.column_mut(1).scale_mut(k);
        let (a, b) = (fit_within(&d, &spec()).unwrap(), fit_within(&e, &spec()).unwrap());
        let (ba, bb) = (a.get("x1").unwrap(), b.get("x1").unwrap());
        prop_assert!((bb.estimate * k - ba.estimate).abs() < 1e-8 * ba.estimate.abs().max(1.0));
        for (ca, cb) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((ca.t - cb.t).abs() < 1e-8 * ca.t.abs().max(1.0), "{}", ca.name);
        }
    }

    #[test]
    fn demeaning_is_idempotent_and_zero_mean(seed in any::<u64>()) {
        let d = random_panel(seed, 6, 3);
        let (once, means) = within_demean(&d);
        let (twice, _) = within_demean(&once);
        prop_assert!((&once.x - &twice.x).amax() < 1e-12);
        prop_assert!((&once.y - &twice.y).amax() < 1e-12);
        for (gi, f) in means.firms.iter().enumerate() {
            let rows: Vec<usize> = (0..d.y.len()).filter(|i| d.firm_ids[*i] == *f).collect();
            prop_assert_eq!(rows.len(), means.sizes[gi]);
            for j in 0..3 {
                let m: f64 = rows.iter().map(|&i| once.x[(i, j)]).sum::<f64>() / rows.len() as f64;
                prop_assert!(m.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn covariance_is_symmetric_psd(seed in any::<u64>()) {
        let d = random_panel(seed, 7, 3);
        let fit = fit_within(&d, &spec()).unwrap();
        let c = &fit.covariance;
        prop_assert!((c - c.transpose()).amax() < 1e-12 * c.amax());
        let ev = c.clone().symmetric_eigen().eigenvalues;
        prop_assert!(ev.min() > -1e-10 * ev.max());
        for r2 in [fit.r2_within, fit.r2_between, fit.r2_overall] {
            prop_assert!((0.0..=1.0).contains(&r2));
        }
    }

    #[test]
    fn cr1_scales_cr0_by_the_documented_factor(seed in any::<u64>()) {
        let d = random_panel(seed, 6, 2);
        let a = fit_within(&d, &spec().with_correction(ClusterCorrection::CR0)).unwrap();
        let b = fit_within(&d, &spec()).unwrap();
        let (n, g) = (a.n_obs as f64, a.n_firms as f64);
        let factor = g / (g - 1.0) * (n - 1.0) / (n - 2.0 - g - 1.0);
        let (sa, sb) = (a.get("x0").unwrap().se, b.get("x0").unwrap().se);
        prop_assert!((sb * sb / (sa * sa) - factor).abs() < 1e-9 * factor);
    }
}
