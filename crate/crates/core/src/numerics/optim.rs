//! Derivative-free minimization (Nelder–Mead).

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerResult {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best value seen after each iteration.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Convergence requires the spread of simplex values to drop below this...
    pub tolerance: f64,
    /// ...and every vertex to lie within this distance (per coordinate) of the best one.
    pub x_tolerance: f64,
    pub max_iter: usize,
    /// Initial simplex edge per coordinate; `None` uses 5% of |x0ᵢ| (0.00025 at zero).
    pub initial_step: Option<Vec<f64>>,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { tolerance: 1e-9, x_tolerance: 1e-8, max_iter: 2000, initial_step: None }
    }
}

/// Minimizes `f` from `x0`. Non-finite function values are treated as `+∞`.
///
/// Uses the standard coefficients in one or two dimensions and the
/// dimension-adaptive coefficients of Gao and Han above that.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> OptimizerResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let v = eval(x0);
        return OptimizerResult { argmin: vec![], value: v, iterations: 0, converged: true, trace: vec![v] };
    }
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = if n > 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = match &opts.initial_step {
            Some(s) => s[i],
            None if x0[i] != 0.0 => 0.05 * x0[i],
            None => 0.00025,
        };
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        // order: best first; stable so ties keep earlier vertices (x0 first)
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let width = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread.is_finite() && spread.abs() < opts.tolerance && width <= opts.x_tolerance {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for x in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / nf;
            }
        }
        let along = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid.iter().zip(worst).map(|(c, w)| c + t * (c - w)).collect()
        };

        let xr = along(alpha, &simplex[n]);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(alpha * gamma, &simplex[n]);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let xc = along(alpha * rho, &simplex[n]);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-rho, &simplex[n]);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    let shrunk: Vec<f64> =
                        best.iter().zip(&simplex[i]).map(|(b, x)| b + sigma * (x - b)).collect();
                    values[i] = eval(&shrunk);
                    simplex[i] = shrunk;
                }
            }
        }
        let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
        trace.push(best);
    }

    OptimizerResult {
        argmin: simplex[0].clone(),
        value: values[0],
        iterations,
        converged,
        trace,
    }
}
