//! Numerical kernel: distribution functions, dense linear algebra, Nelder–Mead.

pub mod dist;
pub mod linalg;
pub mod optim;
pub mod special;

pub use dist::{
    chisq_cdf, chisq_sf, normal_cdf, normal_pdf, normal_quantile, normal_sf, t_cdf, t_pdf, t_quantile, t_sf,
    t_two_sided_p,
};
pub use linalg::{cholesky, dot, wls_solve, Cholesky, Matrix, SymmetricMatrix, WlsFit};
pub use optim::{nelder_mead, NelderMeadOptions, OptimizerResult};

/// Neumaier-compensated sum; the result does not depend on accumulation luck.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
