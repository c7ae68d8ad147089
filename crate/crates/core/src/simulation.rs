//! Monte-Carlo scenarios for comparing the mega-trial (IPD-MT) and stratified (IPD-S)
//! fixed-effects estimators.
//!
//! Randomness: every (seed, iteration, experiment, arm) cell gets its own PCG-XSH-RR
//! 64/32 generator, seeded from a SplitMix64 hash of the four values. Normal draws use
//! the inverse-CDF transform on open-interval uniforms, so a run is fully determined
//! by the scenario and identical across platforms and thread counts.

use rand::distributions::{Distribution, Open01};
use rand_pcg::Pcg32;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, Design, Observation, ReplicationSet, TreatmentLevels};
use crate::descriptives::quantile;
use crate::error::{Error, Result};
use crate::lmm::fit_ols;
use crate::numerics::{compensated_sum, normal_quantile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: String,
    pub control: ArmSpec,
    pub treatment: ArmSpec,
}

/// Between-subjects scenario: independent normal samples per experiment and arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub experiments: Vec<ExperimentSpec>,
    pub seed: u64,
    pub n_iterations: usize,
}

impl ScenarioSpec {
    /// Two replications with opposite arm imbalance (90/10 and 10/90), true effect 10.
    pub fn imbalance_example(seed: u64, n_iterations: usize) -> Self {
        let arm = |mean, n| ArmSpec { mean, sd: 10.0, n };
        Self {
            experiments: vec![
                ExperimentSpec { id: "Exp. 1".into(), control: arm(20.0, 90), treatment: arm(30.0, 10) },
                ExperimentSpec { id: "Exp. 2".into(), control: arm(60.0, 10), treatment: arm(70.0, 90) },
            ],
            seed,
            n_iterations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiments.is_empty() {
            return Err(Error::Validation("scenario has no experiments".into()));
        }
        for e in &self.experiments {
            for (arm, a) in [("control", &e.control), ("treatment", &e.treatment)] {
                if !(a.sd > 0.0) || !a.sd.is_finite() || !a.mean.is_finite() {
                    return Err(Error::Validation(format!("`{}` {arm}: sd must be positive and finite", e.id)));
                }
                if a.n < 2 {
                    return Err(Error::Validation(format!("`{}` {arm}: sample size must be at least 2", e.id)));
                }
            }
        }
        Ok(())
    }

    /// Expected IPD-MT estimate: pooled treatment mean minus pooled control mean.
    pub fn analytic_mega_trial(&self) -> f64 {
        let pooled = |f: fn(&ExperimentSpec) -> &ArmSpec| {
            let n: usize = self.experiments.iter().map(|e| f(e).n).sum();
            self.experiments.iter().map(|e| f(e).n as f64 * f(e).mean).sum::<f64>() / n as f64
        };
        pooled(|e| &e.treatment) - pooled(|e| &e.control)
    }

    /// Expected IPD-S (experiment factor) estimate: within-experiment differences
    /// weighted by n_c·n_t/(n_c + n_t), which is what least squares with an
    /// experiment factor and a common treatment effect computes.
    pub fn analytic_stratified(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for e in &self.experiments {
            let (nc, nt) = (e.control.n as f64, e.treatment.n as f64);
            let w = nc * nt / (nc + nt);
            num += w * (e.treatment.mean - e.control.mean);
            den += w;
        }
        num / den
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one (seed, iteration, experiment, arm) cell.
pub fn substream(seed: u64, iteration: u64, experiment: u64, arm: u64) -> Pcg32 {
    let state = mix(mix(mix(mix(seed) ^ iteration) ^ experiment) ^ arm);
    let stream = mix(state ^ 0x5851_f42d_4c95_7f2d);
    Pcg32::new(state, stream)
}

pub fn standard_normal(rng: &mut Pcg32) -> f64 {
    let u: f64 = Open01.sample(rng);
    normal_quantile(u).expect("open-interval uniform")
}

/// Draws one data set; `(spec.seed, iteration)` fully determines the output.
pub fn simulate_scenario(spec: &ScenarioSpec, iteration: usize) -> Result<ReplicationSet> {
    spec.validate()?;
    let mut observations = Vec::new();
    for (j, e) in spec.experiments.iter().enumerate() {
        for (k, (arm, a)) in [(Arm::Control, &e.control), (Arm::Treatment, &e.treatment)].into_iter().enumerate() {
            let mut rng = substream(spec.seed, iteration as u64, j as u64, k as u64);
            let prefix = match arm {
                Arm::Control => "c",
                Arm::Treatment => "t",
            };
            for i in 0..a.n {
                observations.push(Observation {
                    experiment_id: e.id.clone(),
                    participant_id: format!("{prefix}{:04}", i + 1),
                    arm,
                    outcome: Some(a.mean + a.sd * standard_normal(&mut rng)),
                });
            }
        }
    }
    let designs = spec.experiments.iter().map(|e| (e.id.clone(), Design::Between)).collect();
    ReplicationSet::from_observations(observations, &designs, TreatmentLevels::default(), "outcome", "")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled, sequential otherwise.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationEstimate {
    pub iteration: usize,
    pub ipd_mt: f64,
    pub ipd_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub analytic: f64,
    /// 0.5% and 99.5% empirical quantiles.
    pub spread_99: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub seed: u64,
    pub n_iterations: usize,
    pub ipd_mt: EstimatorSummary,
    pub ipd_s: EstimatorSummary,
    pub iterations: Vec<IterationEstimate>,
}

fn one_iteration(spec: &ScenarioSpec, iteration: usize) -> Result<IterationEstimate> {
    let data = simulate_scenario(spec, iteration)?;
    let mt = fit_ols(&data, false, 0.05)?;
    let s = fit_ols(&data, true, 0.05)?;
    Ok(IterationEstimate { iteration, ipd_mt: mt.treatment().estimate, ipd_s: s.treatment().estimate })
}

fn run_iterations(spec: &ScenarioSpec, mode: ExecutionMode) -> Result<Vec<IterationEstimate>> {
    match mode {
        #[cfg(feature = "parallel")]
        ExecutionMode::Parallel => {
            use rayon::prelude::*;
            (0..spec.n_iterations).into_par_iter().map(|i| one_iteration(spec, i)).collect()
        }
        _ => (0..spec.n_iterations).map(|i| one_iteration(spec, i)).collect(),
    }
}

fn summarize(name: &str, xs: &[f64], analytic: f64) -> EstimatorSummary {
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    let sd = if xs.len() > 1 {
        (compensated_sum(xs.iter().map(|x| (x - mean).powi(2))) / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    EstimatorSummary {
        name: name.into(),
        mean,
        sd,
        analytic,
        spread_99: (quantile(xs, 0.005), quantile(xs, 0.995)),
    }
}

/// Fits both fixed-effects estimators on every iteration and summarizes them.
/// Results are collected in iteration order before aggregation, so the report is
/// bit-identical in either execution mode.
pub fn compare_mt_vs_s(spec: &ScenarioSpec, mode: ExecutionMode) -> Result<BiasReport> {
    spec.validate()?;
    if spec.n_iterations == 0 {
        return Err(Error::Validation("n_iterations must be at least 1".into()));
    }
    let iterations = run_iterations(spec, mode)?;
    let mt: Vec<f64> = iterations.iter().map(|r| r.ipd_mt).collect();
    let s: Vec<f64> = iterations.iter().map(|r| r.ipd_s).collect();
    Ok(BiasReport {
        seed: spec.seed,
        n_iterations: spec.n_iterations,
        ipd_mt: summarize("IPD-MT", &mt, spec.analytic_mega_trial()),
        ipd_s: summarize("IPD-S", &s, spec.analytic_stratified()),
        iterations,
    })
}
