use proptest::prelude::*;
use repmeta::effect_size::EffectSize;
use repmeta::meta::{pool_fixed, pool_random, subgroup_analysis, TauEstimator};

fn es(id: usize, d: f64, v: f64) -> EffectSize {
    EffectSize {
        experiment_id: format!("E{id}"),
        d,
        variance: v,
        n_effective: 10,
        df: 9.0,
        corrected: false,
        subgroup_label: None,
        moderator_x: None,
    }
}

fn effects(ds: &[f64], vs: &[f64]) -> Vec<EffectSize> {
    ds.iter().zip(vs).enumerate().map(|(i, (d, v))| es(i, *d, *v)).collect()
}

proptest! {
    #[test]
    fn pooled_estimates_are_convex_combinations(
        ds in prop::collection::vec(-3.0f64..3.0, 2..12),
        vs in prop::collection::vec(0.01f64..2.0, 12),
    ) {
        let e = effects(&ds, &vs[..ds.len()]);
        let lo = ds.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for m in [pool_fixed(&e, 0.05).unwrap(), pool_random(&e, TauEstimator::DerSimonianLaird, 0.05).unwrap(), pool_random(&e, TauEstimator::Reml, 0.05).unwrap()] {
            prop_assert!(m.pooled >= lo - 1e-12 && m.pooled <= hi + 1e-12);
            prop_assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(m.tau2 >= 0.0);
            prop_assert!((0.0..=100.0).contains(&m.i2));
        }
    }

    #[test]
    fn random_equals_fixed_without_heterogeneity(d in -2.0f64..2.0, vs in prop::collection::vec(0.01f64..2.0, 2..10)) {
        // identical estimates: Q = 0, so τ² is truncated at zero
        let ds = vec![d; vs.len()];
        let e = effects(&ds, &vs);
        let f = pool_fixed(&e, 0.05).unwrap();
        let r = pool_random(&e, TauEstimator::DerSimonianLaird, 0.05).unwrap();
        prop_assert_eq!(r.tau2, 0.0);
        prop_assert!((r.pooled - f.pooled).abs() < 1e-12);
        prop_assert!((r.se - f.se).abs() < 1e-12);
        prop_assert!((r.ci_low - f.ci_low).abs() < 1e-12 && (r.ci_high - f.ci_high).abs() < 1e-12);
    }

    #[test]
    fn shifting_all_effects_shifts_the_pool(
        ds in prop::collection::vec(-3.0f64..3.0, 2..8),
        vs in prop::collection::vec(0.01f64..2.0, 8),
        shift in -5.0f64..5.0,
    ) {
        let e = effects(&ds, &vs[..ds.len()]);
        let shifted: Vec<f64> = ds.iter().map(|d| d + shift).collect();
        let s = effects(&shifted, &vs[..ds.len()]);
        let a = pool_random(&e, TauEstimator::DerSimonianLaird, 0.05).unwrap();
        let b = pool_random(&s, TauEstimator::DerSimonianLaird, 0.05).unwrap();
        prop_assert!((b.pooled - a.pooled - shift).abs() < 1e-9);
        prop_assert!((b.tau2 - a.tau2).abs() < 1e-9);
    }
}

#[test]
fn singleton_subgroup_has_zero_i2() {
    let e = vec![
        es(0, 0.3, 0.14).with_subgroup("a"),
        es(1, 0.4, 0.12).with_subgroup("a"),
        es(2, 1.9, 0.38).with_subgroup("a"),
        es(3, 1.3, 0.07).with_subgroup("b"),
    ];
    for est in [TauEstimator::DerSimonianLaird, TauEstimator::Reml] {
        let sg = subgroup_analysis(&e, est, 0.05).unwrap();
        assert_eq!(sg.groups[1].i2, 0.0);
        assert_eq!(sg.groups[1].tau2, 0.0);
        assert_eq!(sg.groups[1].pooled, 1.3);
    }
}
