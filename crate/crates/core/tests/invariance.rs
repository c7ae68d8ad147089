//! Affine transformations of the outcome: y -> a + b·y with b > 0.

use proptest::prelude::*;
use repmeta::data::{
    Arm, Design, Observation, PairedSample, ReplicationSet, SummaryRow, TreatmentLevels,
};
use repmeta::effect_size::effect_size;
use repmeta::individual::{independent_t_test, paired_t_test, Sidedness};
use repmeta::lmm::{fit_lmm_reml, LmmOptions, ModelSpec};
use repmeta::simulation::{standard_normal, substream};
use std::collections::BTreeMap;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn paired_t(pairs in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 3..30), a in -50.0f64..50.0, b in 0.1f64..10.0) {
        let mk = |f: &dyn Fn(f64) -> f64| {
            let p = pairs.iter().enumerate().map(|(i, (c, t))| (format!("p{i}"), f(*c), f(*t))).collect();
            PairedSample::from_pairs("E", p).unwrap()
        };
        let x = paired_t_test(&mk(&|v| v), Sidedness::TwoSided, 0.05);
        let y = paired_t_test(&mk(&|v| a + b * v), Sidedness::TwoSided, 0.05);
        if let (Ok(x), Ok(y)) = (x, y) {
            prop_assert!(close(y.estimate, b * x.estimate, 1e-9));
            prop_assert!(close(y.se, b * x.se, 1e-9));
            prop_assert!(close(y.t, x.t, 1e-7));
            prop_assert!(close(y.p_value, x.p_value, 1e-7));
            prop_assert!(close(y.ci_low, b * x.ci_low, 1e-9));
        }
    }

    #[test]
    fn independent_t(c in prop::collection::vec(0.0f64..100.0, 2..20), t in prop::collection::vec(0.0f64..100.0, 2..20), a in -50.0f64..50.0, b in 0.1f64..10.0, welch in any::<bool>()) {
        let f = |v: &Vec<f64>| v.iter().map(|x| a + b * x).collect::<Vec<_>>();
        let x = independent_t_test("E", &c, &t, welch, Sidedness::TwoSided, 0.05);
        let y = independent_t_test("E", &f(&c), &f(&t), welch, Sidedness::TwoSided, 0.05);
        if let (Ok(x), Ok(y)) = (x, y) {
            prop_assert!(close(y.estimate, b * x.estimate, 1e-9));
            prop_assert!(close(y.t, x.t, 1e-7));
            prop_assert!(close(y.df, x.df, 1e-9));
            prop_assert!(close(y.p_value, x.p_value, 1e-7));
        }
    }

    #[test]
    fn effect_sizes(mc in 0.0f64..100.0, mt in 0.0f64..100.0, sc in 1.0f64..40.0, st in 1.0f64..40.0, r in -0.9f64..0.9, a in -50.0f64..50.0, b in 0.1f64..10.0, within in any::<bool>()) {
        let row = |a: f64, b: f64| SummaryRow {
            experiment_id: "E".into(),
            n_control: 12,
            n_treatment: 12,
            mean_control: a + b * mc,
            sd_control: b * sc,
            mean_treatment: a + b * mt,
            sd_treatment: b * st,
            corr: within.then_some(r),
            design: if within { Design::Within } else { Design::Between },
        };
        let x = effect_size(&row(0.0, 1.0)).unwrap();
        let y = effect_size(&row(a, b)).unwrap();
        prop_assert!(close(x.d, y.d, 1e-9));
        prop_assert!(close(x.variance, y.variance, 1e-9));
    }
}

fn simulated_set(seed: u64) -> ReplicationSet {
    let mut obs = Vec::new();
    for e in 0..4u64 {
        let mut rng = substream(seed, 0, e, 0);
        let shift = 5.0 * standard_normal(&mut rng);
        let slope = 20.0 + 6.0 * standard_normal(&mut rng);
        for p in 0..12 {
            let u = 8.0 * standard_normal(&mut rng);
            for arm in Arm::BOTH {
                obs.push(Observation {
                    experiment_id: format!("E{e}"),
                    participant_id: format!("P{p}"),
                    arm,
                    outcome: Some(30.0 + shift + u + slope * arm.indicator() + 10.0 * standard_normal(&mut rng)),
                });
            }
        }
    }
    ReplicationSet::from_observations(obs, &BTreeMap::new(), TreatmentLevels::default(), "y", "").unwrap()
}

#[test]
fn lmm_fit_is_affine_equivariant() {
    let set = simulated_set(3);
    let (a, b) = (-7.0, 2.5);
    let mut moved = set.clone();
    for rep in &mut moved.replications {
        for o in &mut rep.observations {
            o.outcome = o.outcome.map(|y| a + b * y);
        }
    }
    let x = fit_lmm_reml(&set, &ModelSpec::full(), &LmmOptions::default()).unwrap();
    let y = fit_lmm_reml(&moved, &ModelSpec::full(), &LmmOptions::default()).unwrap();
    let tol = 1e-4;
    assert!(close(y.treatment().estimate, b * x.treatment().estimate, tol));
    assert!(close(y.treatment().se, b * x.treatment().se, tol));
    assert!(close(y.treatment().p_value, x.treatment().p_value, tol));
    let (vx, vy) = (&x.variance, &y.variance);
    for (p, q) in [
        (vx.residual, vy.residual),
        (vx.participant, vy.participant),
        (vx.experiment_slope, vy.experiment_slope),
        (vx.experiment_intercept, vy.experiment_intercept),
    ] {
        assert!((q - b * b * p).abs() <= 1e-3 * (1.0 + b * b * vx.residual), "{p} -> {q}");
    }
    assert!((y.reml_criterion.unwrap() - x.reml_criterion.unwrap() - 2.0 * (moved.observations().count() as f64 - 2.0) * b.ln()).abs() < 1e-4);
}
