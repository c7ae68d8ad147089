//! Participant-characteristic summaries, per-replication outcome summaries and the
//! series behind profile plots.

use serde::Serialize;

use crate::data::{
    complete_pairs, Arm, Covariate, CovariateTable, Design, Replication, ReplicationSet, SummaryRow,
};
use crate::error::{Error, Result};
use crate::numerics::compensated_sum;

pub fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Sample variance with the n − 1 denominator; 0 for a single value.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() - 1) as f64
}

pub fn sd(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Midpoint of the two central order statistics for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Linear-interpolation quantile (type 7): h = (n − 1)p.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let v = sorted(xs);
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Pearson correlation; `None` when either sample has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = compensated_sum(y.iter().map(|b| (b - my) * (b - my)));
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
}

impl ArmSummary {
    pub fn of(xs: &[f64]) -> Self {
        Self { n: xs.len(), mean: mean(xs), sd: sd(xs), median: median(xs) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub experiment_id: String,
    pub design: Design,
    pub control: ArmSummary,
    pub treatment: ArmSummary,
    /// Over complete pairs; missing when undefined or for between-subjects designs.
    pub corr: Option<f64>,
    pub n_pairs: Option<usize>,
    pub warnings: Vec<String>,
}

impl ReplicationSummary {
    pub fn arm(&self, arm: Arm) -> &ArmSummary {
        match arm {
            Arm::Control => &self.control,
            Arm::Treatment => &self.treatment,
        }
    }

    pub fn to_summary_row(&self) -> Result<SummaryRow> {
        let row = SummaryRow {
            experiment_id: self.experiment_id.clone(),
            n_control: self.control.n,
            n_treatment: self.treatment.n,
            mean_control: self.control.mean,
            sd_control: self.control.sd,
            mean_treatment: self.treatment.mean,
            sd_treatment: self.treatment.sd,
            corr: self.corr,
            design: self.design,
        };
        row.validate()?;
        Ok(row)
    }
}

pub fn summarize_replication(replication: &Replication) -> Result<ReplicationSummary> {
    let c = replication.outcomes(Arm::Control);
    let t = replication.outcomes(Arm::Treatment);
    if c.len() < 2 || t.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "`{}` needs at least 2 observed outcomes per arm (control {}, treatment {})",
            replication.experiment_id,
            c.len(),
            t.len()
        )));
    }
    let mut warnings = Vec::new();
    let (corr, n_pairs) = match replication.design {
        Design::Within => match complete_pairs(replication) {
            Ok(ps) => {
                let r = pearson(&ps.control, &ps.treatment);
                if r.is_none() {
                    warnings.push(format!(
                        "`{}`: correlation undefined (an arm has zero variance); reported as missing",
                        replication.experiment_id
                    ));
                }
                (r, Some(ps.n_pairs))
            }
            Err(_) => {
                warnings.push(format!("`{}`: fewer than 2 complete pairs; correlation missing", replication.experiment_id));
                (None, None)
            }
        },
        Design::Between => (None, None),
    };
    Ok(ReplicationSummary {
        experiment_id: replication.experiment_id.clone(),
        design: replication.design,
        control: ArmSummary::of(&c),
        treatment: ArmSummary::of(&t),
        corr,
        n_pairs,
        warnings,
    })
}

pub fn summarize_all(set: &ReplicationSet) -> Result<Vec<ReplicationSummary>> {
    set.replications.iter().map(summarize_replication).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateStat {
    pub covariate: Covariate,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateSummary {
    pub experiment_id: String,
    pub n: usize,
    /// In the fixed order programming, java, unit_testing, junit.
    pub stats: Vec<CovariateStat>,
    pub warnings: Vec<String>,
}

impl CovariateSummary {
    pub fn get(&self, c: Covariate) -> &CovariateStat {
        self.stats.iter().find(|s| s.covariate == c).expect("all covariates summarized")
    }
}

pub fn summarize_covariates(table: &CovariateTable) -> Vec<CovariateSummary> {
    table
        .experiment_ids()
        .into_iter()
        .map(|exp| {
            let rows: Vec<_> = table.rows.iter().filter(|r| r.experiment_id == exp).collect();
            let stats = Covariate::ALL
                .into_iter()
                .map(|c| {
                    let xs: Vec<f64> = rows.iter().map(|r| f64::from(r.value(c))).collect();
                    CovariateStat { covariate: c, mean: mean(&xs), sd: sd(&xs) }
                })
                .collect();
            let mut warnings = Vec::new();
            if rows.len() < 2 {
                warnings.push(format!("`{exp}`: a single participant; standard deviations reported as 0"));
            }
            CovariateSummary { experiment_id: exp.to_string(), n: rows.len(), stats, warnings }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileLine {
    pub experiment_id: String,
    /// One value per category, aligned with `ProfileSeries::categories`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSeries {
    pub label: String,
    pub categories: Vec<String>,
    pub lines: Vec<ProfileLine>,
}

pub fn profile_series_covariates(table: &CovariateTable) -> ProfileSeries {
    let lines = summarize_covariates(table)
        .into_iter()
        .map(|s| ProfileLine { experiment_id: s.experiment_id, values: s.stats.iter().map(|c| c.mean).collect() })
        .collect();
    ProfileSeries {
        label: "Mean experience (1-4)".into(),
        categories: Covariate::ALL.iter().map(|c| c.name().to_string()).collect(),
        lines,
    }
}

pub fn profile_series_outcomes(set: &ReplicationSet) -> Result<ProfileSeries> {
    let lines = set
        .replications
        .iter()
        .map(|r| {
            let s = summarize_replication(r)?;
            Ok(ProfileLine { experiment_id: s.experiment_id, values: vec![s.control.mean, s.treatment.mean] })
        })
        .collect::<Result<Vec<_>>>()?;
    let label = if set.outcome_name.is_empty() { "Mean outcome".to_string() } else { format!("Mean {}", set.outcome_name) };
    Ok(ProfileSeries {
        label,
        categories: vec![set.levels.control.clone(), set.levels.treatment.clone()],
        lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_raw_csv, ParseOptions, TreatmentLevels};

    fn set(text: &str) -> ReplicationSet {
        let opts = ParseOptions { levels: TreatmentLevels::new("ITL", "TDD"), ..Default::default() };
        parse_raw_csv(text, &opts).unwrap()
    }

    #[test]
    fn basic_statistics() {
        assert_eq!(mean(&[1.0, 2.0, 3.0, 4.0]), 2.5);
        assert!((sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]) - 2.138089935299395).abs() < 1e-12);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
    }

    #[test]
    fn perfect_pairing_has_unit_correlation() {
        let s = set("experiment_id,participant_id,treatment,outcome\nE,a,ITL,0\nE,a,TDD,0\nE,b,ITL,100\nE,b,TDD,100\n");
        let sum = summarize_replication(&s.replications[0]).unwrap();
        assert_eq!(sum.corr, Some(1.0));
    }

    #[test]
    fn constant_arms_leave_corr_missing() {
        let s = set("experiment_id,participant_id,treatment,outcome\nE,a,ITL,5\nE,a,TDD,5\nE,b,ITL,5\nE,b,TDD,5\n");
        let sum = summarize_replication(&s.replications[0]).unwrap();
        assert_eq!(sum.control.sd, 0.0);
        assert_eq!(sum.corr, None);
        assert_eq!(sum.warnings.len(), 1);
    }

    #[test]
    fn insufficient_arm_rejected() {
        let s = set("experiment_id,participant_id,treatment,outcome\nE,a,ITL,5\nE,a,TDD,5\n");
        assert!(matches!(summarize_replication(&s.replications[0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn profile_for_one_experiment_has_two_points() {
        let s = set("experiment_id,participant_id,treatment,outcome\nE,a,ITL,1\nE,a,TDD,3\nE,b,ITL,2\nE,b,TDD,6\n");
        let p = profile_series_outcomes(&s).unwrap();
        assert_eq!(p.lines.len(), 1);
        assert_eq!(p.lines[0].values, vec![1.5, 4.5]);
        assert_eq!(p.categories, vec!["ITL", "TDD"]);
    }
}
