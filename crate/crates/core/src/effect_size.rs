//! Standardized mean differences (treatment − control) and their sampling variances.
//!
//! Hand derivation for the illustrative summary table (uncorrected d, n = complete pairs):
//!
//! | experiment | d      | variance |
//! |------------|--------|----------|
//! | F-Secure H | 0.2709 | 0.1417   |
//! | F-Secure K | 0.4377 | 0.1156   |
//! | F-Secure O | 1.8999 | 0.3847   |
//! | UPV        | 1.2806 | 0.0665   |
//!
//! DerSimonian–Laird over these four gives Q = 9.42 on 3 df, C = Σw − Σw²/Σw = 22.62,
//! τ² = 0.284, pooled d = 0.894 and I² = 68.1%.

use serde::{Deserialize, Serialize};

use crate::data::{complete_pairs, Design, ReplicationSet, SummaryRow};
use crate::descriptives::{mean, pearson, sd};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub experiment_id: String,
    pub d: f64,
    pub variance: f64,
    pub n_effective: usize,
    /// Degrees of freedom behind the standardizer; used by the small-sample correction.
    pub df: f64,
    pub corrected: bool,
    pub subgroup_label: Option<String>,
    pub moderator_x: Option<f64>,
}

impl EffectSize {
    pub fn se(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn with_subgroup(mut self, label: impl Into<String>) -> Self {
        self.subgroup_label = Some(label.into());
        self
    }

    pub fn with_moderator(mut self, x: f64) -> Self {
        self.moderator_x = Some(x);
        self
    }
}

pub fn repeated_measures_d(row: &SummaryRow) -> Result<EffectSize> {
    let id = &row.experiment_id;
    if row.design != Design::Within {
        return Err(Error::Validation(format!("`{id}`: repeated-measures d needs a within-subjects row")));
    }
    let r = row
        .corr
        .ok_or_else(|| Error::Validation(format!("`{id}`: repeated-measures d needs the paired correlation")))?;
    if r.abs() >= 1.0 {
        return Err(Error::Domain(format!("`{id}`: |corr| = 1 leaves the standardizer undefined")));
    }
    let n = row.n_pairs();
    if n < 2 {
        return Err(Error::InsufficientData(format!("`{id}`: n < 2")));
    }
    let (sc, st) = (row.sd_control, row.sd_treatment);
    let s_diff2 = sc * sc + st * st - 2.0 * r * sc * st;
    let s_within = (s_diff2 / (2.0 * (1.0 - r))).sqrt();
    if s_within <= 0.0 || !s_within.is_finite() {
        return Err(Error::Domain(format!("`{id}`: zero standardizer")));
    }
    let d = (row.mean_treatment - row.mean_control) / s_within;
    let nf = n as f64;
    let variance = (1.0 / nf + d * d / (2.0 * nf)) * 2.0 * (1.0 - r);
    Ok(EffectSize {
        experiment_id: id.clone(),
        d,
        variance,
        n_effective: n,
        df: nf - 1.0,
        corrected: false,
        subgroup_label: None,
        moderator_x: None,
    })
}

pub fn between_subjects_d(row: &SummaryRow) -> Result<EffectSize> {
    let id = &row.experiment_id;
    let (nc, nt) = (row.n_control as f64, row.n_treatment as f64);
    if row.n_control < 2 || row.n_treatment < 2 {
        return Err(Error::InsufficientData(format!("`{id}`: each arm needs n >= 2")));
    }
    let pooled = (((nc - 1.0) * row.sd_control.powi(2) + (nt - 1.0) * row.sd_treatment.powi(2)) / (nc + nt - 2.0)).sqrt();
    if pooled <= 0.0 {
        return Err(Error::Domain(format!("`{id}`: pooled standard deviation is zero")));
    }
    let d = (row.mean_treatment - row.mean_control) / pooled;
    let variance = (nc + nt) / (nc * nt) + d * d / (2.0 * (nc + nt));
    Ok(EffectSize {
        experiment_id: id.clone(),
        d,
        variance,
        n_effective: row.n_control + row.n_treatment,
        df: nc + nt - 2.0,
        corrected: false,
        subgroup_label: None,
        moderator_x: None,
    })
}

/// Dispatches on the row's design.
pub fn effect_size(row: &SummaryRow) -> Result<EffectSize> {
    match row.design {
        Design::Within => repeated_measures_d(row),
        Design::Between => between_subjects_d(row),
    }
}

/// Small-sample factor J = 1 − 3/(4·df − 1).
pub fn hedges_j(df: f64) -> f64 {
    1.0 - 3.0 / (4.0 * df - 1.0)
}

pub fn hedges_correction(e: &EffectSize, df: f64) -> Result<EffectSize> {
    if e.corrected {
        return Err(Error::Validation(format!("`{}`: small-sample correction already applied", e.experiment_id)));
    }
    if df <= 1.0 || !df.is_finite() {
        return Err(Error::Domain(format!("Hedges correction needs df > 1, got {df}")));
    }
    let j = hedges_j(df);
    Ok(EffectSize { d: e.d * j, variance: e.variance * j * j, corrected: true, ..e.clone() })
}

/// Effect sizes for every summary row, optionally corrected with each row's own df.
pub fn effect_sizes(rows: &[SummaryRow], hedges: bool) -> Result<Vec<EffectSize>> {
    rows.iter()
        .map(|row| {
            let e = effect_size(row)?;
            if hedges {
                hedges_correction(&e, e.df)
            } else {
                Ok(e)
            }
        })
        .collect()
}

/// Summary rows for the AD path: within-subjects replications contribute complete
/// pairs only, so both arms carry n = number of pairs.
pub fn ad_summary_rows(set: &ReplicationSet) -> Result<Vec<SummaryRow>> {
    set.replications
        .iter()
        .map(|rep| match rep.design {
            Design::Within => {
                let ps = complete_pairs(rep)?;
                let corr = pearson(&ps.control, &ps.treatment).ok_or_else(|| {
                    Error::Domain(format!("`{}`: correlation undefined for complete pairs", rep.experiment_id))
                })?;
                Ok(SummaryRow {
                    experiment_id: rep.experiment_id.clone(),
                    n_control: ps.n_pairs,
                    n_treatment: ps.n_pairs,
                    mean_control: mean(&ps.control),
                    sd_control: sd(&ps.control),
                    mean_treatment: mean(&ps.treatment),
                    sd_treatment: sd(&ps.treatment),
                    corr: Some(corr),
                    design: Design::Within,
                })
            }
            Design::Between => {
                let c = rep.outcomes(crate::data::Arm::Control);
                let t = rep.outcomes(crate::data::Arm::Treatment);
                Ok(SummaryRow {
                    experiment_id: rep.experiment_id.clone(),
                    n_control: c.len(),
                    n_treatment: t.len(),
                    mean_control: mean(&c),
                    sd_control: sd(&c),
                    mean_treatment: mean(&t),
                    sd_treatment: sd(&t),
                    corr: None,
                    design: Design::Between,
                })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn within(mc: f64, sc: f64, mt: f64, st: f64, r: f64, n: usize) -> SummaryRow {
        SummaryRow {
            experiment_id: "E".into(),
            n_control: n,
            n_treatment: n,
            mean_control: mc,
            sd_control: sc,
            mean_treatment: mt,
            sd_treatment: st,
            corr: Some(r),
            design: Design::Within,
        }
    }

    fn between(mc: f64, sc: f64, nc: usize, mt: f64, st: f64, nt: usize) -> SummaryRow {
        SummaryRow {
            experiment_id: "B".into(),
            n_control: nc,
            n_treatment: nt,
            mean_control: mc,
            sd_control: sc,
            mean_treatment: mt,
            sd_treatment: st,
            corr: None,
            design: Design::Between,
        }
    }

    #[test]
    fn equal_means_give_zero_d() {
        assert_eq!(repeated_measures_d(&within(5.0, 2.0, 5.0, 3.0, 0.3, 10)).unwrap().d, 0.0);
        let e = between_subjects_d(&between(5.0, 2.0, 10, 5.0, 2.0, 20)).unwrap();
        assert_eq!(e.d, 0.0);
        assert!((e.variance - 30.0 / 200.0).abs() < 1e-15);
    }

    #[test]
    fn unit_correlation_rejected() {
        assert!(repeated_measures_d(&within(5.0, 2.0, 6.0, 2.0, 1.0, 10)).is_err());
    }

    #[test]
    fn population_values_of_the_imbalance_example() {
        let e = between_subjects_d(&between(20.0, 10.0, 90, 30.0, 10.0, 10)).unwrap();
        assert!((e.d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_invariance_of_between_d() {
        let a = between_subjects_d(&between(20.0, 7.0, 12, 31.0, 9.0, 15)).unwrap();
        let b = between_subjects_d(&between(40.0, 14.0, 12, 62.0, 18.0, 15)).unwrap();
        assert!((a.d - b.d).abs() < 1e-12);
    }

    #[test]
    fn hedges_factor() {
        let e = EffectSize {
            experiment_id: "U".into(),
            d: 1.28,
            variance: 0.066,
            n_effective: 29,
            df: 28.0,
            corrected: false,
            subgroup_label: None,
            moderator_x: None,
        };
        let g = hedges_correction(&e, 28.0).unwrap();
        assert!((g.d - 1.28 * (1.0 - 3.0 / 111.0)).abs() < 1e-12);
        assert!((g.d - 1.245).abs() < 5e-4);
        assert!(hedges_correction(&g, 28.0).is_err());
        assert!(hedges_correction(&e, 1.0).is_err());
        let big = hedges_correction(&e, 1e9).unwrap();
        assert!((big.d - e.d).abs() < 1e-8);
    }
}
