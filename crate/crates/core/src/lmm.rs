//! Individual-participant-data models: fixed-effects ANOVA (with or without the
//! experiment factor), the pooled paired t of the mega-trial approach, and a REML
//! linear mixed model with a random experiment intercept and treatment slope
//! (unstructured 2×2 covariance) plus a random participant intercept.
//!
//! The marginal covariance of experiment j is
//! `V_j = Z_j Ψ Z_jᵀ + σ_p² Σ_participants 11ᵀ + σ² I`, with `Z_j = [1, T]`.
//! Everything is computed in units of σ² (profiled out of the criterion), using the
//! closed-form inverse of the participant blocks and a Woodbury update for Ψ.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{complete_pairs, Arm, Covariate, CovariateTable, Design, PairedSample, ReplicationSet};
use crate::error::{Error, Result};
use crate::individual::{check_alpha, paired_t_test, Sidedness, TestResult};
use crate::numerics::{
    cholesky, nelder_mead, normal_quantile, normal_sf, t_quantile, t_two_sided_p, wls_solve, Matrix,
    NelderMeadOptions, SymmetricMatrix,
};

pub const GUIDELINE_2_WARNING: &str = "Guideline 2: avoid IPD-MT. Analyzing pooled raw data as if it came \
from one big experiment ignores which experiment each datum comes from and may produce biased or \
underpowered results; prefer IPD-S models that include the experiment.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomStructure {
    None,
    /// Random experiment intercept and treatment slope with unstructured covariance.
    ExperimentInterceptSlope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeratorLevel {
    Experiment,
    Participant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Separation {
    /// Experiment-mean-centred covariate and experiment mean as separate interactions.
    #[default]
    WithinBetween,
    /// Raw covariate in a single interaction.
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeratorSpec {
    pub name: String,
    pub level: ModeratorLevel,
    pub separation: Option<Separation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub experiment_factor: bool,
    pub random: RandomStructure,
    pub participant_random_intercept: bool,
    pub moderator: Option<ModeratorSpec>,
}

impl ModelSpec {
    /// Treatment fixed effect, random experiment intercept/slope, random participant intercept.
    pub fn full() -> Self {
        Self {
            experiment_factor: false,
            random: RandomStructure::ExperimentInterceptSlope,
            participant_random_intercept: true,
            moderator: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment_factor && self.random != RandomStructure::None {
            return Err(Error::Validation(
                "an experiment fixed factor and random experiment effects are mutually exclusive".into(),
            ));
        }
        Ok(())
    }
}

/// Degrees of freedom for t-based inference on fixed effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DfRule {
    /// Number of experiments − 1 for every fixed effect.
    #[default]
    ExperimentsMinusOne,
    /// Normal approximation.
    Z,
    /// Containment rule: a term varying within participants gets
    /// N − participants − (number of such terms); terms constant within participants
    /// get the df of the level at which they vary.
    WithinParticipant,
}

impl DfRule {
    pub fn as_str(self) -> &'static str {
        match self {
            DfRule::ExperimentsMinusOne => "experiments-minus-1",
            DfRule::Z => "z",
            DfRule::WithinParticipant => "within-participant",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmmOptions {
    pub df_rule: DfRule,
    pub alpha: f64,
    pub optimizer: NelderMeadOptions,
    /// Keep the optimizer's best-value trace in the fit.
    pub keep_trace: bool,
}

impl Default for LmmOptions {
    fn default() -> Self {
        Self { df_rule: DfRule::default(), alpha: 0.05, optimizer: NelderMeadOptions::default(), keep_trace: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffect {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    /// `None` means normal-based inference.
    pub df: Option<f64>,
    pub statistic: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub experiment_intercept: f64,
    pub experiment_slope: f64,
    pub experiment_covariance: f64,
    pub participant: f64,
    pub residual: f64,
}

impl VarianceComponents {
    /// Between-experiment sd of the treatment effect.
    pub fn sd_diff(&self) -> f64 {
        self.experiment_slope.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMean {
    pub arm: Arm,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmFit {
    pub spec: ModelSpec,
    pub fixed: Vec<FixedEffect>,
    /// Name of the moderator interaction row, if any.
    pub interaction: Option<String>,
    pub variance: VarianceComponents,
    pub cell_means: Option<[CellMean; 2]>,
    /// Treatment cell mean over control cell mean.
    pub ratio: Option<f64>,
    pub reml_criterion: Option<f64>,
    /// `None` for ordinary least squares (residual df used).
    pub df_rule: Option<DfRule>,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
    pub n_participants: usize,
    pub n_experiments: usize,
    pub alpha: f64,
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl LmmFit {
    pub fn coefficient(&self, name: &str) -> Option<&FixedEffect> {
        self.fixed.iter().find(|f| f.name == name)
    }

    /// The treatment fixed effect (M_diff).
    pub fn treatment(&self) -> &FixedEffect {
        self.coefficient(TREATMENT).expect("treatment term is always present")
    }

    pub fn interaction_effect(&self) -> Option<&FixedEffect> {
        self.interaction.as_deref().and_then(|n| self.coefficient(n))
    }
}

pub const INTERCEPT: &str = "(intercept)";
pub const TREATMENT: &str = "treatment";

/// Observation-level frame: response, fixed design and grouping.
#[derive(Debug, Clone)]
struct Frame {
    y: Vec<f64>,
    x: Matrix,
    names: Vec<String>,
    exp: Vec<usize>,
    part: Vec<usize>,
    treat: Vec<f64>,
    n_exp: usize,
    n_part: usize,
}

#[derive(Debug, Clone)]
struct Row {
    y: f64,
    t: f64,
    exp: usize,
    part: usize,
    experiment_id: String,
    participant_id: String,
}

fn rows_of(data: &ReplicationSet) -> (Vec<Row>, Vec<String>) {
    let mut rows = Vec::new();
    let mut exp_ids = Vec::new();
    let mut part_index: BTreeMap<(usize, &str), usize> = BTreeMap::new();
    for (j, rep) in data.replications.iter().enumerate() {
        exp_ids.push(rep.experiment_id.clone());
        for o in &rep.observations {
            let Some(y) = o.outcome else { continue };
            let next = part_index.len();
            let part = *part_index.entry((j, o.participant_id.as_str())).or_insert(next);
            rows.push(Row {
                y,
                t: o.arm.indicator(),
                exp: j,
                part,
                experiment_id: rep.experiment_id.clone(),
                participant_id: o.participant_id.clone(),
            });
        }
    }
    (rows, exp_ids)
}

fn frame(rows: &[Row], names: Vec<String>, design: impl Fn(&Row) -> Vec<f64>) -> Result<Frame> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("no observed outcomes".into()));
    }
    // re-index experiments and participants densely in order of appearance
    let mut exp_map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut part_map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut exp = Vec::with_capacity(rows.len());
    let mut part = Vec::with_capacity(rows.len());
    for r in rows {
        let n = exp_map.len();
        exp.push(*exp_map.entry(r.exp).or_insert(n));
        let n = part_map.len();
        part.push(*part_map.entry(r.part).or_insert(n));
    }
    let x_rows: Vec<Vec<f64>> = rows.iter().map(&design).collect();
    Ok(Frame {
        y: rows.iter().map(|r| r.y).collect(),
        x: Matrix::from_rows(&x_rows),
        names,
        exp,
        part,
        treat: rows.iter().map(|r| r.t).collect(),
        n_exp: exp_map.len(),
        n_part: part_map.len(),
    })
}

fn check_arms(rows: &[Row]) -> Result<()> {
    let treated = rows.iter().filter(|r| r.t == 1.0).count();
    let control = rows.len() - treated;
    if treated < 2 || control < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 observations per arm (control {control}, treatment {treated})"
        )));
    }
    Ok(())
}

fn inference(name: &str, estimate: f64, se: f64, df: Option<f64>, alpha: f64) -> Result<FixedEffect> {
    let statistic = estimate / se;
    let (crit, p) = match df {
        Some(df) => (t_quantile(1.0 - alpha / 2.0, df)?, t_two_sided_p(statistic, df)?),
        None => (normal_quantile(1.0 - alpha / 2.0)?, (2.0 * normal_sf(statistic.abs())).min(1.0)),
    };
    Ok(FixedEffect {
        name: name.to_string(),
        estimate,
        se,
        df,
        statistic,
        ci_low: estimate - crit * se,
        ci_high: estimate + crit * se,
        p_value: p,
    })
}

fn contrast_se(cov: &SymmetricMatrix, c: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in 0..c.len() {
        for b in 0..c.len() {
            s += c[a] * cov.get(a, b) * c[b];
        }
    }
    s.max(0.0).sqrt()
}

fn cell_means(
    beta: &[f64],
    cov: &SymmetricMatrix,
    dfs: [Option<f64>; 2],
    alpha: f64,
) -> Result<([CellMean; 2], f64)> {
    let mut out = Vec::with_capacity(2);
    for arm in Arm::BOTH {
        let mut c = vec![0.0; beta.len()];
        c[0] = 1.0;
        c[1] = arm.indicator();
        let est: f64 = c.iter().zip(beta).map(|(a, b)| a * b).sum();
        let df = match arm {
            Arm::Control => dfs[0],
            // intercept + treatment: the smaller of the two dfs
            Arm::Treatment => dfs[0].zip(dfs[1]).map(|(a, b)| a.min(b)),
        };
        let f = inference("cell", est, contrast_se(cov, &c), df, alpha)?;
        out.push(CellMean { arm, estimate: est, se: f.se, ci_low: f.ci_low, ci_high: f.ci_high });
    }
    let ratio = out[1].estimate / out[0].estimate;
    let arr: [CellMean; 2] = [out[0].clone(), out[1].clone()];
    Ok((arr, ratio))
}

/// Fixed-effects ANOVA by ordinary least squares. Without the experiment factor this is
/// the mega-trial analysis and carries the Guideline-2 warning.
pub fn fit_ols(data: &ReplicationSet, include_experiment_factor: bool, alpha: f64) -> Result<LmmFit> {
    check_alpha(alpha)?;
    let (rows, exp_ids) = rows_of(data);
    check_arms(&rows)?;
    let mut names = vec![INTERCEPT.to_string(), TREATMENT.to_string()];
    let present: Vec<usize> = {
        let mut v: Vec<usize> = rows.iter().map(|r| r.exp).collect();
        v.dedup();
        v.sort_unstable();
        v.dedup();
        v
    };
    if include_experiment_factor {
        for &j in present.iter().skip(1) {
            names.push(format!("experiment[{}]", exp_ids[j]));
        }
    }
    let fr = frame(&rows, names.clone(), |r| {
        let mut v = vec![1.0, r.t];
        if include_experiment_factor {
            for &j in present.iter().skip(1) {
                v.push(if r.exp == j { 1.0 } else { 0.0 });
            }
        }
        v
    })?;
    ols_on_frame(&fr, alpha, include_experiment_factor)
}

fn ols_on_frame(fr: &Frame, alpha: f64, include_experiment_factor: bool) -> Result<LmmFit> {
    let n = fr.y.len();
    let p = fr.x.cols();
    if n <= p {
        return Err(Error::InsufficientData("more parameters than observations".into()));
    }
    let fit = wls_solve(&fr.x, &fr.y, &vec![1.0; n])?;
    let df = (n - p) as f64;
    let sigma2 = fit.weighted_rss / df;
    let mut cov = fit.unscaled_covariance.clone();
    for a in 0..p {
        for b in 0..=a {
            cov.set(a, b, cov.get(a, b) * sigma2);
        }
    }
    let fixed = fr
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| inference(name, fit.coefficients[i], cov.get(i, i).sqrt(), Some(df), alpha))
        .collect::<Result<Vec<_>>>()?;
    let (cells, ratio) = if include_experiment_factor {
        (None, None)
    } else {
        let (c, r) = cell_means(&fit.coefficients, &cov, [Some(df); 2], alpha)?;
        (Some(c), Some(r))
    };
    let mut warnings = Vec::new();
    if !include_experiment_factor && fr.n_exp > 1 {
        warnings.push(GUIDELINE_2_WARNING.to_string());
    }
    Ok(LmmFit {
        spec: ModelSpec {
            experiment_factor: include_experiment_factor,
            random: RandomStructure::None,
            participant_random_intercept: false,
            moderator: None,
        },
        fixed,
        interaction: None,
        variance: VarianceComponents {
            experiment_intercept: 0.0,
            experiment_slope: 0.0,
            experiment_covariance: 0.0,
            participant: 0.0,
            residual: sigma2,
        },
        cell_means: cells,
        ratio,
        reml_criterion: None,
        df_rule: None,
        converged: true,
        iterations: 0,
        n_obs: n,
        n_participants: fr.n_part,
        n_experiments: fr.n_exp,
        alpha,
        trace: Vec::new(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IpdMtTest {
    pub result: TestResult,
    pub warning: String,
}

/// One dependent t-test over the complete pairs of all replications, ignoring the
/// experiment each pair comes from.
pub fn pooled_paired_t(data: &ReplicationSet, sidedness: Sidedness, alpha: f64) -> Result<IpdMtTest> {
    let mut pairs = Vec::new();
    for rep in &data.replications {
        if rep.design != Design::Within {
            return Err(Error::Validation(format!("`{}` is not a within-subjects replication", rep.experiment_id)));
        }
        // replications with fewer than 2 pairs still contribute what they have
        let ps = match complete_pairs(rep) {
            Ok(ps) => ps,
            Err(Error::InsufficientData(_)) => continue,
            Err(e) => return Err(e),
        };
        for ((id, c), t) in ps.participant_ids.iter().zip(&ps.control).zip(&ps.treatment) {
            pairs.push((format!("{}/{}", rep.experiment_id, id), *c, *t));
        }
    }
    let sample = PairedSample::from_pairs("pooled", pairs)?;
    Ok(IpdMtTest { result: paired_t_test(&sample, sidedness, alpha)?, warning: GUIDELINE_2_WARNING.into() })
}

// ---------------------------------------------------------------------------
// REML

/// Sufficient cross-products of `W = [X | 1 | T | y]` for one experiment.
#[derive(Debug, Clone)]
struct Block {
    /// Σ wwᵀ, q×q row-major.
    r: Vec<f64>,
    /// Per participant-block size m: (m, number of participants, Σ s sᵀ) with s the block sum of w.
    by_size: Vec<(usize, usize, Vec<f64>)>,
}

struct Reml<'a> {
    fr: &'a Frame,
    blocks: Vec<Block>,
    q: usize,
    p: usize,
    random_experiment: bool,
    random_participant: bool,
}

struct RemlEval {
    criterion: f64,
    beta: Vec<f64>,
    /// (XᵀṼ⁻¹X)⁻¹, to be scaled by σ².
    unscaled_cov: SymmetricMatrix,
    sigma2: f64,
}

impl<'a> Reml<'a> {
    fn new(fr: &'a Frame, random_experiment: bool, random_participant: bool) -> Self {
        let p = fr.x.cols();
        let q = p + 3;
        let w_of = |i: usize| -> Vec<f64> {
            let mut w = fr.x.row(i).to_vec();
            w.push(1.0);
            w.push(fr.treat[i]);
            w.push(fr.y[i]);
            w
        };
        let mut blocks = Vec::with_capacity(fr.n_exp);
        for j in 0..fr.n_exp {
            let mut r = vec![0.0; q * q];
            let mut sums: BTreeMap<usize, (usize, Vec<f64>)> = BTreeMap::new();
            for i in (0..fr.y.len()).filter(|&i| fr.exp[i] == j) {
                let w = w_of(i);
                for a in 0..q {
                    for b in 0..q {
                        r[a * q + b] += w[a] * w[b];
                    }
                }
                let e = sums.entry(fr.part[i]).or_insert_with(|| (0, vec![0.0; q]));
                e.0 += 1;
                for a in 0..q {
                    e.1[a] += w[a];
                }
            }
            let mut by_m: BTreeMap<usize, (usize, Vec<f64>)> = BTreeMap::new();
            for (m, s) in sums.into_values() {
                let e = by_m.entry(m).or_insert_with(|| (0, vec![0.0; q * q]));
                e.0 += 1;
                for a in 0..q {
                    for b in 0..q {
                        e.1[a * q + b] += s[a] * s[b];
                    }
                }
            }
            blocks.push(Block { r, by_size: by_m.into_iter().map(|(m, (c, s))| (m, c, s)).collect() });
        }
        Self { fr, blocks, q, p, random_experiment, random_participant }
    }

    fn n_theta(&self) -> usize {
        (if self.random_experiment { 3 } else { 0 }) + usize::from(self.random_participant)
    }

    /// Relative Cholesky factor of Ψ/σ² and relative participant variance σ_p²/σ².
    fn unpack(&self, theta: &[f64]) -> ([f64; 3], f64) {
        let lam = if self.random_experiment { [theta[0], theta[1], theta[2]] } else { [0.0; 3] };
        let rho2 = if self.random_participant { theta[theta.len() - 1].powi(2) } else { 0.0 };
        (lam, rho2)
    }

    fn evaluate(&self, theta: &[f64]) -> Option<RemlEval> {
        let (q, p) = (self.q, self.p);
        let (lam, rho2) = self.unpack(theta);
        let (zi, zt) = (p, p + 1);
        let mut s = vec![0.0; q * q];
        let mut logdet = 0.0;
        for block in &self.blocks {
            let mut m = block.r.clone();
            for (size, count, c) in &block.by_size {
                let cm = rho2 / (1.0 + *size as f64 * rho2);
                logdet += *count as f64 * (*size as f64 * rho2).ln_1p();
                if cm != 0.0 {
                    for (mv, cv) in m.iter_mut().zip(c) {
                        *mv -= cm * cv;
                    }
                }
            }
            if self.random_experiment {
                // L = [[l11, 0], [l21, l22]]
                let (l11, l21, l22) = (lam[0], lam[1], lam[2]);
                // H = M[:, Z] L  (q × 2)
                let mut h = vec![[0.0f64; 2]; q];
                for a in 0..q {
                    let (mi, mt) = (m[a * q + zi], m[a * q + zt]);
                    h[a] = [mi * l11 + mt * l21, mt * l22];
                }
                // K = I + Lᵀ M_ZZ L = I + [Lᵀ H_Z]
                let k00 = 1.0 + l11 * h[zi][0] + l21 * h[zt][0];
                let k01 = l11 * h[zi][1] + l21 * h[zt][1];
                let k11 = 1.0 + l22 * h[zt][1];
                let det = k00 * k11 - k01 * k01;
                if !(det > 0.0) || !(k00 > 0.0) {
                    return None;
                }
                logdet += det.ln();
                let (i00, i01, i11) = (k11 / det, -k01 / det, k00 / det);
                for a in 0..q {
                    let ha = h[a];
                    let u = [ha[0] * i00 + ha[1] * i01, ha[0] * i01 + ha[1] * i11];
                    for b in 0..q {
                        let hb = h[b];
                        m[a * q + b] -= u[0] * hb[0] + u[1] * hb[1];
                    }
                }
            }
            for (sv, mv) in s.iter_mut().zip(&m) {
                *sv += mv;
            }
        }
        let mut sxx = SymmetricMatrix::zeros(p);
        for a in 0..p {
            for b in 0..=a {
                sxx.set(a, b, s[a * q + b]);
            }
        }
        let chol = cholesky(&sxx).ok()?;
        let yi = q - 1;
        let sxy: Vec<f64> = (0..p).map(|a| s[a * q + yi]).collect();
        let beta = chol.solve(&sxy);
        let rss = s[yi * q + yi] - beta.iter().zip(&sxy).map(|(b, v)| b * v).sum::<f64>();
        let nr = (self.fr.y.len() - p) as f64;
        if !(rss > 0.0) {
            return None;
        }
        let sigma2 = rss / nr;
        let criterion = nr * (1.0 + (2.0 * std::f64::consts::PI * sigma2).ln()) + logdet + chol.log_det();
        criterion.is_finite().then(|| RemlEval { criterion, beta, unscaled_cov: chol.inverse(), sigma2 })
    }
}

/// Starting values by the method of moments on per-experiment paired summaries.
fn initial_theta(fr: &Frame, random_experiment: bool, random_participant: bool) -> Vec<f64> {
    let n = fr.y.len();
    let mean_y = fr.y.iter().sum::<f64>() / n as f64;
    let total_var = fr.y.iter().map(|y| (y - mean_y).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    // per-participant treatment difference where both arms are present
    let mut per_part: BTreeMap<usize, (usize, [Option<f64>; 2])> = BTreeMap::new();
    for i in 0..n {
        let e = per_part.entry(fr.part[i]).or_insert((fr.exp[i], [None, None]));
        e.1[fr.treat[i] as usize] = Some(fr.y[i]);
    }
    let mut diffs_by_exp: Vec<Vec<f64>> = vec![Vec::new(); fr.n_exp];
    for (j, arms) in per_part.values() {
        if let [Some(c), Some(t)] = arms {
            diffs_by_exp[*j].push(t - c);
        }
    }
    let all: Vec<f64> = diffs_by_exp.iter().flatten().copied().collect();
    let var = |v: &[f64]| {
        if v.len() < 2 {
            return 0.0;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let sigma2 = if all.len() >= 2 { (var(&all) / 2.0).max(1e-8 * total_var) } else { total_var };
    let sigma2 = if sigma2 > 0.0 { sigma2 } else { 1.0 };
    let mut theta = Vec::new();
    if random_experiment {
        let means: Vec<f64> = diffs_by_exp
            .iter()
            .filter(|d| !d.is_empty())
            .map(|d| d.iter().sum::<f64>() / d.len() as f64)
            .collect();
        let noise = diffs_by_exp
            .iter()
            .filter(|d| d.len() >= 2)
            .map(|d| var(d) / d.len() as f64)
            .sum::<f64>()
            / diffs_by_exp.iter().filter(|d| d.len() >= 2).count().max(1) as f64;
        let slope = (var(&means) - noise).max(0.05 * sigma2);
        let mut ctrl_means = vec![(0.0, 0usize); fr.n_exp];
        for i in (0..n).filter(|&i| fr.treat[i] == 0.0) {
            ctrl_means[fr.exp[i]].0 += fr.y[i];
            ctrl_means[fr.exp[i]].1 += 1;
        }
        let cm: Vec<f64> = ctrl_means.iter().filter(|c| c.1 > 0).map(|c| c.0 / c.1 as f64).collect();
        let intercept = var(&cm).max(0.05 * sigma2);
        theta.extend([(intercept / sigma2).sqrt(), 0.0, (slope / sigma2).sqrt()]);
    }
    if random_participant {
        let part = (total_var - sigma2).max(0.1 * sigma2);
        theta.push((part / sigma2).sqrt());
    }
    theta
}

fn minimize(reml: &Reml, x0: &[f64], opts: &NelderMeadOptions) -> crate::numerics::OptimizerResult {
    let f = |th: &[f64]| reml.evaluate(th).map_or(f64::INFINITY, |e| e.criterion);
    let mut o = opts.clone();
    if o.initial_step.is_none() {
        o.initial_step = Some(x0.iter().map(|v| (0.5 * v.abs()).max(0.1)).collect());
    }
    nelder_mead(f, x0, &o)
}

fn fit_reml_frame(fr: &Frame, spec: &ModelSpec, opts: &LmmOptions) -> Result<(Vec<f64>, RemlEval, bool, usize, Vec<f64>)> {
    let random_experiment = spec.random == RandomStructure::ExperimentInterceptSlope;
    let reml = Reml::new(fr, random_experiment, spec.participant_random_intercept);
    let x0 = initial_theta(fr, random_experiment, spec.participant_random_intercept);
    if reml.n_theta() == 0 {
        let eval = reml.evaluate(&[]).ok_or(Error::RankDeficient)?;
        return Ok((vec![], eval, true, 0, vec![]));
    }
    let start_value = reml.evaluate(&x0).map(|e| e.criterion);
    if start_value.is_none() {
        return Err(Error::NotPositiveDefinite { pivot: 0 });
    }
    let mut best = minimize(&reml, &x0, &opts.optimizer);
    let mut iterations = best.iterations;
    let mut trace = best.trace.clone();
    // polish from the optimum with a fresh simplex
    let again = minimize(&reml, &best.argmin, &opts.optimizer);
    iterations += again.iterations;
    let append = |t: &[f64], trace: &mut Vec<f64>| {
        let floor = trace.last().copied().unwrap_or(f64::INFINITY);
        trace.extend(t.iter().map(|v| v.min(floor)));
    };
    append(&again.trace, &mut trace);
    if again.value <= best.value {
        best = again;
    }
    if !best.converged {
        for (k, factor) in [1.5, 0.6, 2.5].iter().enumerate() {
            let jittered: Vec<f64> =
                x0.iter().enumerate().map(|(i, v)| v * factor + 0.05 * ((i + k) % 3) as f64).collect();
            let r = minimize(&reml, &jittered, &opts.optimizer);
            iterations += r.iterations;
            append(&r.trace, &mut trace);
            if r.value < best.value || (r.converged && (r.value - best.value).abs() < 1e-6) {
                best = r;
            }
        }
    }
    if !best.value.is_finite() {
        return Err(Error::NoConvergence(format!("REML criterion not finite; trace {:?}", trace)));
    }
    let eval = reml.evaluate(&best.argmin).ok_or(Error::NotPositiveDefinite { pivot: 0 })?;
    Ok((best.argmin, eval, best.converged, iterations, trace))
}

fn varies_within(values: &[f64], groups: &[usize]) -> bool {
    let mut first: BTreeMap<usize, f64> = BTreeMap::new();
    values.iter().zip(groups).any(|(v, g)| {
        let f = *first.entry(*g).or_insert(*v);
        (f - v).abs() > 1e-12
    })
}

fn column_dfs(fr: &Frame, rule: DfRule, random_experiment: bool) -> Vec<Option<f64>> {
    let p = fr.x.cols();
    let n = fr.y.len() as f64;
    match rule {
        DfRule::Z => vec![None; p],
        DfRule::ExperimentsMinusOne => {
            let df = if fr.n_exp >= 2 { (fr.n_exp - 1) as f64 } else { n - p as f64 };
            vec![Some(df.max(1.0)); p]
        }
        DfRule::WithinParticipant => {
            let cols: Vec<Vec<f64>> = (0..p).map(|c| (0..fr.y.len()).map(|i| fr.x[(i, c)]).collect()).collect();
            let within: Vec<bool> = cols.iter().map(|c| varies_within(c, &fr.part)).collect();
            let exp_level: Vec<bool> = cols.iter().map(|c| !varies_within(c, &fr.exp)).collect();
            let p_w = within.iter().filter(|w| **w).count() as f64;
            let p_e = exp_level.iter().filter(|e| **e).count() as f64;
            let p_p = (0..p).filter(|&c| !within[c] && !exp_level[c]).count() as f64;
            (0..p)
                .map(|c| {
                    let df = if within[c] {
                        n - fr.n_part as f64 - p_w
                    } else if exp_level[c] && random_experiment {
                        fr.n_exp as f64 - p_e
                    } else if random_experiment {
                        fr.n_part as f64 - fr.n_exp as f64 - p_p
                    } else {
                        fr.n_part as f64 - p_e - p_p
                    };
                    Some(df.max(1.0))
                })
                .collect()
        }
    }
}

fn reml_fit(fr: &Frame, spec: ModelSpec, opts: &LmmOptions, cells: bool) -> Result<LmmFit> {
    spec.validate()?;
    check_alpha(opts.alpha)?;
    let mut warnings = Vec::new();
    let mut spec = spec;
    if spec.participant_random_intercept {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &p in &fr.part {
            *counts.entry(p).or_default() += 1;
        }
        if counts.values().all(|&c| c < 2) {
            spec.participant_random_intercept = false;
            warnings.push("no participant contributes two observations; participant random intercept dropped".into());
        }
    }
    if spec.random == RandomStructure::ExperimentInterceptSlope && fr.n_exp < 2 {
        return Err(Error::InsufficientData("random experiment effects need at least 2 experiments".into()));
    }
    let random_experiment = spec.random == RandomStructure::ExperimentInterceptSlope;
    let (theta, eval, converged, iterations, trace) = fit_reml_frame(fr, &spec, opts)?;
    if !converged {
        warnings.push(format!("REML optimizer did not meet its tolerance after {iterations} iterations"));
    }
    let p = fr.x.cols();
    let mut cov = eval.unscaled_cov.clone();
    for a in 0..p {
        for b in 0..=a {
            cov.set(a, b, cov.get(a, b) * eval.sigma2);
        }
    }
    let dfs = column_dfs(fr, opts.df_rule, random_experiment);
    let fixed = fr
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| inference(name, eval.beta[i], cov.get(i, i).sqrt(), dfs[i], opts.alpha))
        .collect::<Result<Vec<_>>>()?;
    let (lam, rho2) = {
        let reml = Reml { fr, blocks: vec![], q: 0, p, random_experiment, random_participant: spec.participant_random_intercept };
        reml.unpack(&theta)
    };
    let s2 = eval.sigma2;
    let variance = VarianceComponents {
        experiment_intercept: s2 * lam[0] * lam[0],
        experiment_slope: s2 * (lam[1] * lam[1] + lam[2] * lam[2]),
        experiment_covariance: s2 * lam[0] * lam[1],
        participant: s2 * rho2,
        residual: s2,
    };
    let (cell_means, ratio) = if cells {
        let (c, r) = cell_means(&eval.beta, &cov, [dfs[0], dfs[1]], opts.alpha)?;
        (Some(c), Some(r))
    } else {
        (None, None)
    };
    Ok(LmmFit {
        spec,
        fixed,
        interaction: None,
        variance,
        cell_means,
        ratio,
        reml_criterion: Some(eval.criterion),
        df_rule: Some(opts.df_rule),
        converged,
        iterations,
        n_obs: fr.y.len(),
        n_participants: fr.n_part,
        n_experiments: fr.n_exp,
        alpha: opts.alpha,
        trace: if opts.keep_trace { trace } else { Vec::new() },
        warnings,
    })
}

/// REML fit of intercept + treatment with the random structure of `spec`.
pub fn fit_lmm_reml(data: &ReplicationSet, spec: &ModelSpec, opts: &LmmOptions) -> Result<LmmFit> {
    spec.validate()?;
    if spec.moderator.is_some() {
        return Err(Error::Validation(
            "moderator models are fitted by the moderator_* functions, not fit_lmm_reml".into(),
        ));
    }
    let (rows, exp_ids) = rows_of(data);
    check_arms(&rows)?;
    let mut names = vec![INTERCEPT.to_string(), TREATMENT.to_string()];
    let present: Vec<usize> = {
        let mut v: Vec<usize> = rows.iter().map(|r| r.exp).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    if spec.experiment_factor {
        names.extend(present.iter().skip(1).map(|&j| format!("experiment[{}]", exp_ids[j])));
    }
    let fr = frame(&rows, names, |r| {
        let mut v = vec![1.0, r.t];
        if spec.experiment_factor {
            v.extend(present.iter().skip(1).map(|&j| if r.exp == j { 1.0 } else { 0.0 }));
        }
        v
    })?;
    reml_fit(&fr, spec.clone(), opts, !spec.experiment_factor)
}

/// Adds a treatment × experiment-label interaction; the first label (in experiment
/// order) is the reference level.
pub fn moderator_experiment_level(
    data: &ReplicationSet,
    labels: &BTreeMap<String, String>,
    moderator_name: &str,
    opts: &LmmOptions,
) -> Result<LmmFit> {
    let (rows, _) = rows_of(data);
    check_arms(&rows)?;
    let mut levels: Vec<&str> = Vec::new();
    for rep in &data.replications {
        let l = labels.get(&rep.experiment_id).ok_or_else(|| {
            Error::Validation(format!("no `{moderator_name}` label for experiment `{}`", rep.experiment_id))
        })?;
        if !levels.contains(&l.as_str()) {
            levels.push(l);
        }
    }
    if levels.len() != 2 {
        return Err(Error::Validation(format!(
            "experiment-level moderator `{moderator_name}` needs exactly 2 levels across experiments, found {}",
            levels.len()
        )));
    }
    let other = levels[1].to_string();
    let main = format!("{moderator_name}[{other}]");
    let inter = format!("{TREATMENT}:{main}");
    let names = vec![INTERCEPT.to_string(), TREATMENT.to_string(), main, inter.clone()];
    let fr = frame(&rows, names, |r| {
        let l = if labels[&r.experiment_id] == other { 1.0 } else { 0.0 };
        vec![1.0, r.t, l, r.t * l]
    })?;
    let spec = ModelSpec {
        moderator: Some(ModeratorSpec { name: moderator_name.into(), level: ModeratorLevel::Experiment, separation: None }),
        ..ModelSpec::full()
    };
    let mut fit = reml_fit(&fr, spec, opts, false)?;
    fit.interaction = Some(inter);
    Ok(fit)
}

/// Adds treatment × participant covariate interaction(s). Participants without a
/// covariate row are left out of the fit.
pub fn moderator_participant_level(
    data: &ReplicationSet,
    covariates: &CovariateTable,
    covariate: Covariate,
    separation: Separation,
    opts: &LmmOptions,
) -> Result<LmmFit> {
    let (all_rows, _) = rows_of(data);
    let mut x_of: BTreeMap<(String, String), f64> = BTreeMap::new();
    for r in &covariates.rows {
        x_of.insert((r.experiment_id.clone(), r.participant_id.clone()), f64::from(r.value(covariate)));
    }
    let rows: Vec<Row> = all_rows
        .iter()
        .filter(|r| x_of.contains_key(&(r.experiment_id.clone(), r.participant_id.clone())))
        .cloned()
        .collect();
    check_arms(&rows)?;
    let dropped = all_rows.len() - rows.len();
    let x = |r: &Row| x_of[&(r.experiment_id.clone(), r.participant_id.clone())];
    // experiment means over participants (not observations)
    let mut per_exp: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in &rows {
        per_exp.entry(r.exp).or_default().insert(r.part, x(r));
    }
    let xbar: BTreeMap<usize, f64> =
        per_exp.iter().map(|(j, m)| (*j, m.values().sum::<f64>() / m.len() as f64)).collect();
    let xs: Vec<f64> = rows.iter().map(x).collect();
    if xs.iter().all(|v| *v == xs[0]) {
        return Err(Error::Validation(format!("covariate `{}` is constant", covariate.name())));
    }
    let name = covariate.name();
    let (names, inter) = match separation {
        Separation::Naive => {
            let inter = format!("{TREATMENT}:{name}");
            (vec![INTERCEPT.into(), TREATMENT.into(), name.to_string(), inter.clone()], inter)
        }
        Separation::WithinBetween => {
            let centred: Vec<f64> = rows.iter().map(|r| x(r) - xbar[&r.exp]).collect();
            if centred.iter().all(|v| v.abs() < 1e-12) {
                return Err(Error::Validation(format!(
                    "covariate `{name}` does not vary within any experiment"
                )));
            }
            let inter = format!("{TREATMENT}:{name}_within");
            (
                vec![
                    INTERCEPT.into(),
                    TREATMENT.into(),
                    format!("{name}_within"),
                    format!("{name}_between"),
                    inter.clone(),
                    format!("{TREATMENT}:{name}_between"),
                ],
                inter,
            )
        }
    };
    let fr = frame(&rows, names, |r| {
        let v = x(r);
        match separation {
            Separation::Naive => vec![1.0, r.t, v, r.t * v],
            Separation::WithinBetween => {
                let m = xbar[&r.exp];
                vec![1.0, r.t, v - m, m, r.t * (v - m), r.t * m]
            }
        }
    })?;
    let spec = ModelSpec {
        moderator: Some(ModeratorSpec {
            name: name.into(),
            level: ModeratorLevel::Participant,
            separation: Some(separation),
        }),
        ..ModelSpec::full()
    };
    let mut fit = match reml_fit(&fr, spec.clone(), opts, false) {
        // the between-experiment term can be aliased with the intercept when every
        // experiment has the same covariate mean
        Err(Error::RankDeficient) | Err(Error::NotPositiveDefinite { .. })
            if separation == Separation::WithinBetween =>
        {
            return Err(Error::Validation(format!(
                "covariate `{name}`: experiment means are collinear with the intercept; use the naive mode"
            )))
        }
        other => other?,
    };
    if dropped > 0 {
        fit.warnings.push(format!("{dropped} observation(s) without covariate values left out"));
    }
    fit.interaction = Some(inter);
    Ok(fit)
}

/// Marginal covariance of one experiment's observation vector, assembled densely.
/// Used to check the structured computations.
pub fn marginal_covariance(
    treat: &[f64],
    participant: &[usize],
    variance: &VarianceComponents,
) -> SymmetricMatrix {
    let n = treat.len();
    let mut v = SymmetricMatrix::zeros(n);
    for i in 0..n {
        for k in 0..=i {
            let z_i = [1.0, treat[i]];
            let z_k = [1.0, treat[k]];
            let mut val = z_i[0] * z_k[0] * variance.experiment_intercept
                + (z_i[0] * z_k[1] + z_i[1] * z_k[0]) * variance.experiment_covariance
                + z_i[1] * z_k[1] * variance.experiment_slope;
            if participant[i] == participant[k] {
                val += variance.participant;
            }
            if i == k {
                val += variance.residual;
            }
            v.set(i, k, val);
        }
    }
    v
}
