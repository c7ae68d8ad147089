//! Aggregated-data pooling: fixed-effect and random-effects meta-analysis,
//! heterogeneity statistics, subgroup analysis, meta-regression and the forest model.

use serde::{Deserialize, Serialize};

use crate::effect_size::EffectSize;
use crate::error::{Error, Result};
use crate::individual::check_alpha;
use crate::numerics::{chisq_sf, normal_quantile, normal_sf, wls_solve, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TauEstimator {
    /// Method of moments.
    #[default]
    DerSimonianLaird,
    /// Restricted maximum likelihood, by Fisher scoring.
    Reml,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaModel {
    Fixed,
    RandomDl,
    RandomReml,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heterogeneity {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Heterogeneity {
    /// Rule of thumb: 25/50/75% mark small/medium/large.
    pub fn from_i2(i2: f64) -> Self {
        if i2 >= 75.0 {
            Heterogeneity::Large
        } else if i2 >= 50.0 {
            Heterogeneity::Medium
        } else if i2 >= 25.0 {
            Heterogeneity::Small
        } else {
            Heterogeneity::Negligible
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Heterogeneity::Negligible => "negligible",
            Heterogeneity::Small => "small",
            Heterogeneity::Medium => "medium",
            Heterogeneity::Large => "large",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaResult {
    pub model: MetaModel,
    pub experiment_ids: Vec<String>,
    pub k: usize,
    pub pooled: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub z: f64,
    pub p_value: f64,
    pub tau2: f64,
    pub q: f64,
    pub q_df: usize,
    pub q_p: f64,
    pub i2: f64,
    pub heterogeneity: Heterogeneity,
    /// Normalized weights in input order.
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub warnings: Vec<String>,
}

struct Inputs {
    d: Vec<f64>,
    v: Vec<f64>,
}

fn inputs(effects: &[EffectSize]) -> Result<Inputs> {
    if effects.is_empty() {
        return Err(Error::InsufficientData("meta-analysis needs at least one effect size".into()));
    }
    let mut d = Vec::with_capacity(effects.len());
    let mut v = Vec::with_capacity(effects.len());
    for e in effects {
        if !(e.variance > 0.0) || !e.variance.is_finite() || !e.d.is_finite() {
            return Err(Error::Validation(format!("`{}`: effect needs finite d and positive variance", e.experiment_id)));
        }
        d.push(e.d);
        v.push(e.variance);
    }
    Ok(Inputs { d, v })
}

fn weighted_mean(d: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    d.iter().zip(w).map(|(x, wi)| wi * x).sum::<f64>() / sw
}

fn cochran_q(d: &[f64], v: &[f64]) -> f64 {
    let w: Vec<f64> = v.iter().map(|x| 1.0 / x).collect();
    let m = weighted_mean(d, &w);
    d.iter().zip(&w).map(|(x, wi)| wi * (x - m) * (x - m)).sum()
}

fn dl_tau2(d: &[f64], v: &[f64]) -> f64 {
    let k = d.len();
    if k < 2 {
        return 0.0;
    }
    let w: Vec<f64> = v.iter().map(|x| 1.0 / x).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|x| x * x).sum();
    let c = sw - sw2 / sw;
    ((cochran_q(d, v) - (k - 1) as f64) / c).max(0.0)
}

fn reml_tau2(d: &[f64], v: &[f64]) -> Result<f64> {
    if d.len() < 2 {
        return Ok(0.0);
    }
    let mut tau2 = dl_tau2(d, v);
    for _ in 0..1000 {
        let w: Vec<f64> = v.iter().map(|x| 1.0 / (x + tau2)).collect();
        let sw: f64 = w.iter().sum();
        let m = weighted_mean(d, &w);
        let sw2: f64 = w.iter().map(|x| x * x).sum();
        let num: f64 = w.iter().zip(d.iter().zip(v)).map(|(wi, (di, vi))| wi * wi * ((di - m).powi(2) - vi)).sum();
        let next = (num / sw2 + 1.0 / sw).max(0.0);
        if (next - tau2).abs() <= 1e-12 * (1.0 + tau2) {
            return Ok(next);
        }
        tau2 = next;
    }
    Err(Error::NoConvergence("REML between-study variance did not converge".into()))
}

/// Typical within-study variance (k − 1)Σw / ((Σw)² − Σw²).
fn typical_variance(v: &[f64]) -> f64 {
    let w: Vec<f64> = v.iter().map(|x| 1.0 / x).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|x| x * x).sum();
    (v.len() - 1) as f64 * sw / (sw * sw - sw2)
}

fn assemble(effects: &[EffectSize], inp: &Inputs, tau2: f64, model: MetaModel, alpha: f64) -> Result<MetaResult> {
    check_alpha(alpha)?;
    let k = inp.d.len();
    let w: Vec<f64> = inp.v.iter().map(|x| 1.0 / (x + tau2)).collect();
    let sw: f64 = w.iter().sum();
    let pooled = weighted_mean(&inp.d, &w);
    let se = 1.0 / sw.sqrt();
    let zc = normal_quantile(1.0 - alpha / 2.0)?;
    let z = pooled / se;
    let q = cochran_q(&inp.d, &inp.v);
    let q_df = k - 1;
    let q_p = if q_df > 0 { chisq_sf(q, q_df as f64)? } else { 1.0 };
    let i2 = match model {
        MetaModel::Fixed | MetaModel::RandomDl => {
            if q_df > 0 && q > 0.0 {
                ((q - q_df as f64) / q * 100.0).max(0.0)
            } else {
                0.0
            }
        }
        MetaModel::RandomReml => {
            if k > 1 {
                let s2 = typical_variance(&inp.v);
                100.0 * tau2 / (tau2 + s2)
            } else {
                0.0
            }
        }
    };
    let mut warnings = Vec::new();
    if k == 1 && model != MetaModel::Fixed {
        warnings.push("a single study: random-effects pooling reduces to the fixed-effect model with tau^2 = 0".into());
    }
    Ok(MetaResult {
        model,
        experiment_ids: effects.iter().map(|e| e.experiment_id.clone()).collect(),
        k,
        pooled,
        se,
        ci_low: pooled - zc * se,
        ci_high: pooled + zc * se,
        z,
        p_value: (2.0 * normal_sf(z.abs())).min(1.0),
        tau2,
        q,
        q_df,
        q_p,
        i2,
        heterogeneity: Heterogeneity::from_i2(i2),
        weights: w.iter().map(|x| x / sw).collect(),
        alpha,
        warnings,
    })
}

pub fn pool_fixed(effects: &[EffectSize], alpha: f64) -> Result<MetaResult> {
    let inp = inputs(effects)?;
    assemble(effects, &inp, 0.0, MetaModel::Fixed, alpha)
}

pub fn pool_random(effects: &[EffectSize], estimator: TauEstimator, alpha: f64) -> Result<MetaResult> {
    let inp = inputs(effects)?;
    let (tau2, model) = match estimator {
        TauEstimator::DerSimonianLaird => (dl_tau2(&inp.d, &inp.v), MetaModel::RandomDl),
        TauEstimator::Reml => (reml_tau2(&inp.d, &inp.v)?, MetaModel::RandomReml),
    };
    assemble(effects, &inp, tau2, model, alpha)
}

pub fn pool_random_dl(effects: &[EffectSize], alpha: f64) -> Result<MetaResult> {
    pool_random(effects, TauEstimator::DerSimonianLaird, alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupResult {
    /// Group labels in first-appearance order, with one pooled result each.
    pub labels: Vec<String>,
    pub groups: Vec<MetaResult>,
    /// Second group minus first group.
    pub difference: f64,
    pub difference_se: f64,
    pub difference_ci: (f64, f64),
    pub difference_p: f64,
}

/// Random-effects pool per subgroup (separate τ² each) and a z-test of the
/// difference between the two groups.
pub fn subgroup_analysis(effects: &[EffectSize], estimator: TauEstimator, alpha: f64) -> Result<SubgroupResult> {
    check_alpha(alpha)?;
    let mut labels: Vec<String> = Vec::new();
    for e in effects {
        let label = e
            .subgroup_label
            .clone()
            .ok_or_else(|| Error::Validation(format!("`{}` has no subgroup label", e.experiment_id)))?;
        if !labels.contains(&label) {
            labels.push(label);
        }
    }
    if labels.len() != 2 {
        return Err(Error::Validation(format!("subgroup analysis needs exactly 2 groups, found {}", labels.len())));
    }
    let groups = labels
        .iter()
        .map(|l| {
            let members: Vec<EffectSize> =
                effects.iter().filter(|e| e.subgroup_label.as_ref() == Some(l)).cloned().collect();
            pool_random(&members, estimator, alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    let difference = groups[1].pooled - groups[0].pooled;
    let difference_se = (groups[0].se.powi(2) + groups[1].se.powi(2)).sqrt();
    let zc = normal_quantile(1.0 - alpha / 2.0)?;
    Ok(SubgroupResult {
        labels,
        groups,
        difference,
        difference_se,
        difference_ci: (difference - zc * difference_se, difference + zc * difference_se),
        difference_p: (2.0 * normal_sf((difference / difference_se).abs())).min(1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub z: f64,
    pub p_value: f64,
}

impl Coefficient {
    fn z_based(estimate: f64, se: f64, alpha: f64) -> Result<Self> {
        let zc = normal_quantile(1.0 - alpha / 2.0)?;
        let z = estimate / se;
        Ok(Self {
            estimate,
            se,
            ci_low: estimate - zc * se,
            ci_high: estimate + zc * se,
            z,
            p_value: (2.0 * normal_sf(z.abs())).min(1.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRegressionResult {
    pub k: usize,
    pub intercept: Coefficient,
    pub slope: Coefficient,
    /// Method-of-moments residual between-study variance.
    pub tau2: f64,
    /// Residual heterogeneity statistic on k − 2 df.
    pub q_residual: f64,
    pub alpha: f64,
}

pub fn meta_regression(effects: &[EffectSize], alpha: f64) -> Result<MetaRegressionResult> {
    check_alpha(alpha)?;
    let inp = inputs(effects)?;
    let k = inp.d.len();
    if k < 3 {
        return Err(Error::InsufficientData("meta-regression needs at least 3 effects".into()));
    }
    let x = effects
        .iter()
        .map(|e| e.moderator_x.ok_or_else(|| Error::Validation(format!("`{}` has no moderator value", e.experiment_id))))
        .collect::<Result<Vec<f64>>>()?;
    if x.iter().all(|xi| *xi == x[0]) {
        return Err(Error::Validation("moderator is constant across studies".into()));
    }
    let design = Matrix::from_rows(&x.iter().map(|xi| vec![1.0, *xi]).collect::<Vec<_>>());
    let w: Vec<f64> = inp.v.iter().map(|v| 1.0 / v).collect();
    let fixed = wls_solve(&design, &inp.d, &w)?;
    let q_residual = fixed.weighted_rss;
    // tr(P) for P = W − WX(XᵀWX)⁻¹XᵀW
    let mut trace = w.iter().sum::<f64>();
    for i in 0..k {
        let xi = design.row(i);
        let mut quad = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                quad += xi[a] * fixed.unscaled_covariance.get(a, b) * xi[b];
            }
        }
        trace -= w[i] * w[i] * quad;
    }
    let tau2 = ((q_residual - (k - 2) as f64) / trace).max(0.0);
    let w_star: Vec<f64> = inp.v.iter().map(|v| 1.0 / (v + tau2)).collect();
    let fit = wls_solve(&design, &inp.d, &w_star)?;
    let cov = &fit.unscaled_covariance;
    Ok(MetaRegressionResult {
        k,
        intercept: Coefficient::z_based(fit.coefficients[0], cov.get(0, 0).sqrt(), alpha)?,
        slope: Coefficient::z_based(fit.coefficients[1], cov.get(1, 1).sqrt(), alpha)?,
        tau2,
        q_residual,
        alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRow {
    pub label: String,
    pub d: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub weight_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestCaption {
    pub q: f64,
    pub q_df: usize,
    pub q_p: f64,
    pub i2: f64,
    pub tau2: f64,
}

impl ForestCaption {
    pub fn text(&self) -> String {
        format!(
            "Heterogeneity: Q = {:.2}, df = {}, p = {}; I\u{b2} = {:.1}%; \u{3c4}\u{b2} = {:.4}",
            self.q,
            self.q_df,
            format_p(self.q_p),
            self.i2,
            self.tau2
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestPlotModel {
    pub rows: Vec<ForestRow>,
    pub pooled: ForestRow,
    pub caption: ForestCaption,
    pub model: MetaModel,
}

/// p-values below 0.001 print as "< 0.001".
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "< 0.001".into()
    } else {
        format!("{p:.3}")
    }
}

pub fn forest_model(effects: &[EffectSize], meta: &MetaResult) -> Result<ForestPlotModel> {
    if effects.len() != meta.k {
        return Err(Error::Validation(format!(
            "forest model: {} effects but the pooled result covers {}",
            effects.len(),
            meta.k
        )));
    }
    let zc = normal_quantile(1.0 - meta.alpha / 2.0)?;
    let rows = effects
        .iter()
        .zip(&meta.weights)
        .map(|(e, w)| ForestRow {
            label: e.experiment_id.clone(),
            d: e.d,
            ci_low: e.d - zc * e.se(),
            ci_high: e.d + zc * e.se(),
            weight_percent: 100.0 * w,
        })
        .collect();
    Ok(ForestPlotModel {
        rows,
        pooled: ForestRow {
            label: match meta.model {
                MetaModel::Fixed => "Fixed effect".into(),
                _ => "Random effects".into(),
            },
            d: meta.pooled,
            ci_low: meta.ci_low,
            ci_high: meta.ci_high,
            weight_percent: 100.0,
        },
        caption: ForestCaption { q: meta.q, q_df: meta.q_df, q_p: meta.q_p, i2: meta.i2, tau2: meta.tau2 },
        model: meta.model,
    })
}
