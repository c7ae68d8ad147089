//! Fisher and Stouffer p-value pooling and a vote count. Provided for comparison
//! only; every result carries the discouragement notice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::individual::{check_alpha, TestResult};
use crate::numerics::{chisq_sf, normal_quantile, normal_sf};

pub const GUIDELINE_1_WARNING: &str = "Guideline 1: avoid narrative synthesis and aggregation of p-values. \
Vote counts and pooled p-values say nothing about the size of the effect and are shown for comparison only; \
use effect-size meta-analysis or IPD-S models for the main analysis.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMethod {
    Fisher,
    Stouffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledPValue {
    pub method: PoolMethod,
    /// χ² for Fisher, z for Stouffer.
    pub statistic: f64,
    pub df: Option<usize>,
    pub p_value: f64,
    pub k: usize,
    pub warning: String,
}

fn check_ps(ps: &[f64]) -> Result<()> {
    if ps.is_empty() {
        return Err(Error::InsufficientData("p-value pooling needs at least one p-value".into()));
    }
    for &p in ps {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain(format!("p-values must lie in (0,1], got {p}")));
        }
    }
    Ok(())
}

/// Replaces exact zeros with the smallest positive double and reports how many were clamped.
pub fn clamp_zero_ps(ps: &[f64]) -> (Vec<f64>, usize) {
    let mut clamped = 0;
    let out = ps
        .iter()
        .map(|&p| {
            if p == 0.0 {
                clamped += 1;
                f64::MIN_POSITIVE
            } else {
                p
            }
        })
        .collect();
    (out, clamped)
}

pub fn fisher_pool(one_sided_ps: &[f64]) -> Result<PooledPValue> {
    check_ps(one_sided_ps)?;
    let k = one_sided_ps.len();
    let statistic = -2.0 * one_sided_ps.iter().map(|p| p.ln()).sum::<f64>();
    let statistic = statistic.max(0.0);
    Ok(PooledPValue {
        method: PoolMethod::Fisher,
        statistic,
        df: Some(2 * k),
        p_value: chisq_sf(statistic, (2 * k) as f64)?.min(1.0),
        k,
        warning: GUIDELINE_1_WARNING.into(),
    })
}

pub fn stouffer_pool(one_sided_ps: &[f64], weights: Option<&[f64]>) -> Result<PooledPValue> {
    check_ps(one_sided_ps)?;
    let k = one_sided_ps.len();
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != k {
                return Err(Error::Validation(format!("{k} p-values but {} weights", w.len())));
            }
            if w.iter().any(|x| !(*x >= 0.0)) || w.iter().all(|x| *x == 0.0) {
                return Err(Error::Domain("Stouffer weights must be nonnegative and not all zero".into()));
            }
            w.to_vec()
        }
        None => vec![1.0; k],
    };
    let mut num = 0.0;
    for (p, wi) in one_sided_ps.iter().zip(&w) {
        // z = Φ⁻¹(1 − p); p = 1 maps to −∞, so cap it at the largest finite quantile.
        let z = if *p >= 1.0 { -normal_quantile(1.0 - f64::EPSILON)? } else { -normal_quantile(*p)? };
        num += wi * z;
    }
    let z = num / w.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(PooledPValue {
        method: PoolMethod::Stouffer,
        statistic: z,
        df: None,
        p_value: normal_sf(z).clamp(f64::MIN_POSITIVE, 1.0),
        k,
        warning: GUIDELINE_1_WARNING.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Positive,
    Negative,
    NonSignificant,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Positive => "positive",
            Verdict::Negative => "negative",
            Verdict::NonSignificant => "non-significant",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteCount {
    pub alpha: f64,
    pub significant_positive: usize,
    pub significant_negative: usize,
    pub non_significant: usize,
    pub verdict: Verdict,
    pub warning: String,
}

/// Classifies each result by its own p-value and the sign of its estimate.
/// A strict majority decides the verdict; ties are inconclusive.
pub fn vote_count(results: &[TestResult], alpha: f64) -> Result<VoteCount> {
    check_alpha(alpha)?;
    if results.is_empty() {
        return Err(Error::InsufficientData("vote count needs at least one result".into()));
    }
    let (mut pos, mut neg, mut ns) = (0, 0, 0);
    for r in results {
        if r.p_value < alpha {
            if r.estimate > 0.0 {
                pos += 1;
            } else {
                neg += 1;
            }
        } else {
            ns += 1;
        }
    }
    let verdict = if pos > neg + ns {
        Verdict::Positive
    } else if neg > pos + ns {
        Verdict::Negative
    } else if ns > pos + neg {
        Verdict::NonSignificant
    } else {
        Verdict::Inconclusive
    };
    Ok(VoteCount {
        alpha,
        significant_positive: pos,
        significant_negative: neg,
        non_significant: ns,
        verdict,
        warning: GUIDELINE_1_WARNING.into(),
    })
}
