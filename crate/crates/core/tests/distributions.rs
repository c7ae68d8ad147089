//! Distribution functions against numerical integration of their densities.

use proptest::prelude::*;
use repmeta::numerics::special::ln_gamma;
use repmeta::numerics::{chisq_cdf, normal_cdf, normal_pdf, t_cdf, t_pdf};

/// Adaptive Simpson quadrature.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn step(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1) + step(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    step(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

fn chisq_pdf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ((k / 2.0 - 1.0) * x.ln() - x / 2.0 - (k / 2.0) * std::f64::consts::LN_2 - ln_gamma(k / 2.0)).exp()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normal_cdf_matches_quadrature(x in -8.0f64..8.0) {
        let oracle = 0.5 + integrate(&normal_pdf, 0.0, x, 1e-13);
        prop_assert!((normal_cdf(x) - oracle).abs() <= 1e-8, "x={x}");
    }

    #[test]
    fn t_cdf_matches_quadrature(x in -30.0f64..30.0, df in 1.0f64..200.0) {
        let oracle = 0.5 + integrate(&|u| t_pdf(u, df), 0.0, x, 1e-13);
        let got = t_cdf(x, df).unwrap();
        prop_assert!((got - oracle).abs() <= 1e-8, "x={x} df={df}: {got} vs {oracle}");
    }

    #[test]
    fn chisq_cdf_matches_quadrature(x in 0.01f64..80.0, k in 2.0f64..40.0) {
        let oracle = integrate(&|u| chisq_pdf(u, k), 0.0, x, 1e-13);
        let got = chisq_cdf(x, k).unwrap();
        prop_assert!((got - oracle).abs() <= 1e-8, "x={x} k={k}: {got} vs {oracle}");
    }
}

#[test]
fn chisq_with_one_df_via_substitution() {
    // x = u², removes the 1/√x singularity at zero
    for x in [0.1, 1.0, 3.84, 10.0] {
        let oracle = integrate(&|u| 2.0 * u * chisq_pdf(u * u, 1.0), 0.0, f64::sqrt(x), 1e-13);
        assert!((chisq_cdf(x, 1.0).unwrap() - oracle).abs() <= 1e-8, "x={x}");
    }
}
