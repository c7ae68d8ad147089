//! Per-replication t-tests: dependent for within-subjects designs, independent for
//! between-subjects designs.

use serde::{Deserialize, Serialize};

use crate::data::{complete_pairs, Arm, Design, PairedSample, Replication, ReplicationSet};
use crate::descriptives::{mean, variance};
use crate::error::{Error, Result};
use crate::numerics::{t_quantile, t_sf, t_two_sided_p};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    /// Alternative: treatment > control.
    OneSidedGreater,
}

/// Degrees of freedom for the dependent t-test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DfConvention {
    /// Textbook paired t: n_pairs − 1.
    #[default]
    PairsMinusOne,
    /// Residual df of a two-level repeated-measures fit on 2n observations: 2n − 2.
    ObservationsMinusTwo,
}

impl DfConvention {
    pub fn df(self, n_pairs: usize) -> f64 {
        match self {
            DfConvention::PairsMinusOne => (n_pairs - 1) as f64,
            DfConvention::ObservationsMinusTwo => (2 * n_pairs - 2) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub experiment_id: String,
    /// Mean treatment − control.
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    /// Two-sided (1 − alpha) interval regardless of sidedness.
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub df: f64,
    pub sidedness: Sidedness,
    pub alpha: f64,
    pub n: usize,
}

impl TestResult {
    /// Assembles the result from an estimate, its standard error and df.
    pub fn from_t(
        experiment_id: impl Into<String>,
        estimate: f64,
        se: f64,
        df: f64,
        sidedness: Sidedness,
        alpha: f64,
        n: usize,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        let t = estimate / se;
        let p_value = match sidedness {
            Sidedness::TwoSided => t_two_sided_p(t, df)?,
            Sidedness::OneSidedGreater => t_sf(t, df)?,
        };
        let half = t_quantile(1.0 - alpha / 2.0, df)? * se;
        Ok(Self {
            experiment_id: experiment_id.into(),
            estimate,
            se,
            t,
            ci_low: estimate - half,
            ci_high: estimate + half,
            p_value: p_value.clamp(f64::MIN_POSITIVE, 1.0),
            df,
            sidedness,
            alpha,
            n,
        })
    }

    /// Same test, other sidedness.
    pub fn with_sidedness(&self, sidedness: Sidedness) -> Result<Self> {
        Self::from_t(self.experiment_id.clone(), self.estimate, self.se, self.df, sidedness, self.alpha, self.n)
    }

    pub fn significant(&self) -> bool {
        self.p_value < self.alpha
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

pub fn paired_t_test(sample: &PairedSample, sidedness: Sidedness, alpha: f64) -> Result<TestResult> {
    paired_t_test_with(sample, sidedness, alpha, DfConvention::PairsMinusOne)
}

pub fn paired_t_test_with(
    sample: &PairedSample,
    sidedness: Sidedness,
    alpha: f64,
    convention: DfConvention,
) -> Result<TestResult> {
    let n = sample.n_pairs;
    if n < 2 {
        return Err(Error::InsufficientData(format!("`{}`: paired t needs 2 pairs", sample.experiment_id)));
    }
    let var = variance(&sample.differences);
    if var <= 0.0 {
        return Err(Error::Domain(format!("`{}`: differences have zero variance", sample.experiment_id)));
    }
    let se = (var / n as f64).sqrt();
    TestResult::from_t(
        sample.experiment_id.clone(),
        mean(&sample.differences),
        se,
        convention.df(n),
        sidedness,
        alpha,
        n,
    )
}

pub fn independent_t_test(
    experiment_id: &str,
    control: &[f64],
    treatment: &[f64],
    welch: bool,
    sidedness: Sidedness,
    alpha: f64,
) -> Result<TestResult> {
    let (n1, n2) = (control.len(), treatment.len());
    if n1 < 2 || n2 < 2 {
        return Err(Error::InsufficientData(format!("`{experiment_id}`: each arm needs 2 observations")));
    }
    let (v1, v2) = (variance(control), variance(treatment));
    if v1 <= 0.0 && v2 <= 0.0 {
        return Err(Error::Domain(format!("`{experiment_id}`: both arms have zero variance")));
    }
    let (a, b) = (v1 / n1 as f64, v2 / n2 as f64);
    let (se, df) = if welch {
        let se2 = a + b;
        let df = se2 * se2 / (a * a / (n1 - 1) as f64 + b * b / (n2 - 1) as f64);
        (se2.sqrt(), df)
    } else {
        let df = (n1 + n2 - 2) as f64;
        let pooled = ((n1 - 1) as f64 * v1 + (n2 - 1) as f64 * v2) / df;
        ((pooled * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt(), df)
    };
    TestResult::from_t(experiment_id, mean(treatment) - mean(control), se, df, sidedness, alpha, n1 + n2)
}

/// Options for running one test per replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndividualOptions {
    pub sidedness: Sidedness,
    pub alpha: f64,
    pub welch: bool,
    pub df_convention: DfConvention,
}

impl Default for IndividualOptions {
    fn default() -> Self {
        Self { sidedness: Sidedness::TwoSided, alpha: 0.05, welch: true, df_convention: DfConvention::PairsMinusOne }
    }
}

/// Dependent t on complete pairs for within designs, independent t otherwise.
pub fn analyze_replication(replication: &Replication, opts: &IndividualOptions) -> Result<TestResult> {
    match replication.design {
        Design::Within => {
            paired_t_test_with(&complete_pairs(replication)?, opts.sidedness, opts.alpha, opts.df_convention)
        }
        Design::Between => independent_t_test(
            &replication.experiment_id,
            &replication.outcomes(Arm::Control),
            &replication.outcomes(Arm::Treatment),
            opts.welch,
            opts.sidedness,
            opts.alpha,
        ),
    }
}

pub fn analyze_all(set: &ReplicationSet, opts: &IndividualOptions) -> Result<Vec<TestResult>> {
    set.replications.iter().map(|r| analyze_replication(r, opts)).collect()
}
