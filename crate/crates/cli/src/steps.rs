//! The analysis steps. Each returns tables, figures and notes; writing them out and
//! assembling the report happen elsewhere.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use repmeta::data::{
    load_covariates, load_raw_dataset, load_summary_dataset, Covariate, CovariateTable, ParseOptions,
    ReplicationSet, SummaryRow,
};
use repmeta::descriptives::{profile_series_covariates, profile_series_outcomes, summarize_all, summarize_covariates};
use repmeta::effect_size::{ad_summary_rows, effect_sizes, EffectSize};
use repmeta::individual::{analyze_all, IndividualOptions, Sidedness, TestResult};
use repmeta::lmm::{
    fit_lmm_reml, fit_ols, moderator_experiment_level, moderator_participant_level, pooled_paired_t, FixedEffect,
    LmmFit, LmmOptions, ModelSpec, GUIDELINE_2_WARNING,
};
use repmeta::meta::{forest_model, pool_fixed, pool_random, subgroup_analysis, MetaResult, TauEstimator};
use repmeta::plots::{box_groups, render_box_violin, render_forest, render_interactions, render_profile};
use repmeta::plots::{ForestOptions, InteractionPanel};
use repmeta::pvalue::{fisher_pool, stouffer_pool, vote_count, GUIDELINE_1_WARNING};
use repmeta::simulation::{compare_mt_vs_s, BiasReport, ExecutionMode};
use sha2::{Digest, Sha256};

use crate::config::AnalysisConfig;
use crate::table::{num, opt, p, Table};
use crate::UserError;

pub const IPD_NOTE: &str = "IPD analyses were skipped: they need the raw participant-level data file. \
Only aggregated-data (AD) results are available from a summary file.";

#[derive(Debug, Clone)]
pub struct Figure {
    pub file: String,
    pub caption: String,
    pub svg: String,
}

#[derive(Debug, Clone, Default)]
pub struct StepOutput {
    pub tables: Vec<Table>,
    /// Written to disk but too long for the report.
    pub detail_tables: Vec<Table>,
    pub figures: Vec<Figure>,
    /// Structured dumps, (file name, JSON text).
    pub json: Vec<(String, String)>,
    /// Warnings and explanatory notes, shown as block quotes in the report.
    pub notes: Vec<String>,
    /// Short result statements.
    pub text: Vec<String>,
}

impl StepOutput {
    pub fn files(&self) -> Result<crate::output::Files> {
        let mut f = crate::output::Files::default();
        for t in self.tables.iter().chain(&self.detail_tables) {
            f.add(t.file_name(), t.to_csv()?);
        }
        for fig in &self.figures {
            f.add(fig.file.clone(), fig.svg.clone());
        }
        for (name, text) in &self.json {
            f.add(name.clone(), text.clone());
        }
        Ok(f)
    }

    fn note(&mut self, s: impl Into<String>) {
        let s = s.into();
        if !self.notes.contains(&s) {
            self.notes.push(s);
        }
    }
}

/// Loaded input files with their SHA-256 digests.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub raw: Option<ReplicationSet>,
    pub summary: Option<Vec<SummaryRow>>,
    pub covariates: Option<CovariateTable>,
    /// (file name, hex digest) in the order raw, summary, covariates.
    pub hashes: Vec<(String, String)>,
}

fn sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| UserError(format!("cannot read `{}`: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn file_label(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

fn require(path: &Option<PathBuf>) -> Result<Option<&PathBuf>> {
    match path {
        Some(p) if !p.exists() => Err(UserError(format!("input file `{}` not found", p.display())).into()),
        other => Ok(other.as_ref()),
    }
}

impl Inputs {
    pub fn load(c: &AnalysisConfig) -> Result<Self> {
        let mut hashes = Vec::new();
        let raw = match require(&c.raw)? {
            Some(p) => {
                let opts = ParseOptions {
                    levels: c.levels.clone(),
                    outcome_name: c.outcome_name.clone(),
                    outcome_unit: c.outcome_unit.clone(),
                    ..Default::default()
                };
                hashes.push((file_label(p), sha256(p)?));
                Some(load_raw_dataset(p, &opts).with_context(|| format!("loading `{}`", p.display()))?)
            }
            None => None,
        };
        let summary = match require(&c.summary)? {
            Some(p) => {
                hashes.push((file_label(p), sha256(p)?));
                Some(load_summary_dataset(p).with_context(|| format!("loading `{}`", p.display()))?)
            }
            None => None,
        };
        let covariates = match (require(&c.covariates)?, &raw) {
            (Some(p), Some(set)) => {
                hashes.push((file_label(p), sha256(p)?));
                Some(load_covariates(p, set).with_context(|| format!("loading `{}`", p.display()))?)
            }
            (Some(_), None) => {
                return Err(UserError("a covariate file needs the raw data file as well".into()).into());
            }
            _ => None,
        };
        if raw.is_none() && summary.is_none() {
            return Err(UserError("no input data: give a raw data file, a summary file, or both".into()).into());
        }
        Ok(Self { raw, summary, covariates, hashes })
    }

    /// Summary rows for AD: the summary file when given, otherwise computed from the raw data.
    pub fn ad_rows(&self) -> Result<(Vec<SummaryRow>, &'static str)> {
        match (&self.summary, &self.raw) {
            (Some(rows), _) => Ok((rows.clone(), "summary file")),
            (None, Some(set)) => Ok((ad_summary_rows(set)?, "raw data (complete pairs)")),
            (None, None) => unreachable!("checked at load"),
        }
    }
}

fn fmt_fixed(t: &mut Table, f: &FixedEffect) {
    t.push(vec![
        f.name.clone(),
        num(f.estimate, 2),
        num(f.se, 2),
        opt(f.df, 0),
        num(f.statistic, 2),
        num(f.ci_low, 2),
        num(f.ci_high, 2),
        p(f.p_value),
    ]);
}

const FIXED_HEADERS: [&str; 8] = ["term", "estimate", "se", "df", "statistic", "ci_low", "ci_high", "p_value"];

// Step 1

pub fn describe(c: &AnalysisConfig, inp: &Inputs) -> Result<StepOutput> {
    let mut out = StepOutput::default();
    let (lc, lt) = (c.levels.control.as_str(), c.levels.treatment.as_str());
    let mut t = Table::new(
        "descriptives",
        "Descriptive statistics of the outcome per replication and arm",
        &[
            "experiment",
            "design",
            &format!("n_{lc}"),
            &format!("mean_{lc}"),
            &format!("sd_{lc}"),
            &format!("median_{lc}"),
            &format!("n_{lt}"),
            &format!("mean_{lt}"),
            &format!("sd_{lt}"),
            &format!("median_{lt}"),
            "n_pairs",
            "corr",
        ],
    );
    if let Some(set) = &inp.raw {
        for s in summarize_all(set).context("step 1 (describe)")? {
            t.push(vec![
                s.experiment_id.clone(),
                s.design.as_str().into(),
                s.control.n.to_string(),
                num(s.control.mean, 2),
                num(s.control.sd, 2),
                num(s.control.median, 2),
                s.treatment.n.to_string(),
                num(s.treatment.mean, 2),
                num(s.treatment.sd, 2),
                num(s.treatment.median, 2),
                s.n_pairs.map(|n| n.to_string()).unwrap_or_else(|| "NA".into()),
                opt(s.corr, 2),
            ]);
            for w in &s.warnings {
                out.note(w.clone());
            }
        }
        let profile = profile_series_outcomes(set)?;
        out.figures.push(Figure {
            file: "profile_outcome.svg".into(),
            caption: format!("Profile plot: {lc} vs. {lt}"),
            svg: render_profile(&profile, c.width, c.height).render(),
        });
        out.figures.push(Figure {
            file: "box_violin.svg".into(),
            caption: format!("Box plot and violin plot: {lc} vs. {lt}"),
            svg: render_box_violin(&box_groups(set), &set.outcome_name, c.width, c.height).render(),
        });
    } else if let Some(rows) = &inp.summary {
        for r in rows {
            t.push(vec![
                r.experiment_id.clone(),
                r.design.as_str().into(),
                r.n_control.to_string(),
                num(r.mean_control, 2),
                num(r.sd_control, 2),
                "NA".into(),
                r.n_treatment.to_string(),
                num(r.mean_treatment, 2),
                num(r.sd_treatment, 2),
                "NA".into(),
                if r.corr.is_some() { r.n_pairs().to_string() } else { "NA".into() },
                opt(r.corr, 2),
            ]);
        }
        out.note("Descriptives come from the summary file; medians need the raw data.");
    }
    out.tables.push(t);

    if let Some(cov) = &inp.covariates {
        let mut headers = vec!["experiment".to_string(), "n".to_string()];
        for cv in Covariate::ALL {
            headers.push(format!("{}_mean", cv.name()));
            headers.push(format!("{}_sd", cv.name()));
        }
        let h: Vec<&str> = headers.iter().map(String::as_str).collect();
        let mut t = Table::new("covariates", "Participant experience (1-4 scale) per replication", &h);
        for s in summarize_covariates(cov) {
            let mut row = vec![s.experiment_id.clone(), s.n.to_string()];
            for cv in Covariate::ALL {
                row.push(num(s.get(cv).mean, 2));
                row.push(num(s.get(cv).sd, 2));
            }
            t.push(row);
            for w in s.warnings {
                out.note(w);
            }
        }
        out.tables.push(t);
        out.figures.push(Figure {
            file: "profile_covariates.svg".into(),
            caption: "Profile plot for participant experience".into(),
            svg: render_profile(&profile_series_covariates(cov), c.width, c.height).render(),
        });
    }
    Ok(out)
}

// Step 2

pub fn individual_results(c: &AnalysisConfig, set: &ReplicationSet) -> Result<Vec<TestResult>> {
    let opts = IndividualOptions { sidedness: c.sidedness, alpha: c.alpha, welch: c.welch, df_convention: c.df_convention };
    Ok(analyze_all(set, &opts).context("step 2 (individual analyses)")?)
}

pub fn individual(c: &AnalysisConfig, inp: &Inputs) -> Result<StepOutput> {
    let mut out = StepOutput::default();
    let Some(set) = &inp.raw else {
        out.note("Individual analyses need the raw data file.");
        return Ok(out);
    };
    let results = individual_results(c, set)?;
    let mut t = Table::new(
        "individual",
        &format!("Per-replication tests ({} - {})", c.levels.treatment, c.levels.control),
        &["experiment", "n", "estimate", "se", "ci_low", "ci_high", "t", "df", "p_value"],
    );
    for r in &results {
        t.push(vec![
            r.experiment_id.clone(),
            r.n.to_string(),
            num(r.estimate, 2),
            num(r.se, 2),
            num(r.ci_low, 2),
            num(r.ci_high, 2),
            num(r.t, 2),
            num(r.df, 0),
            p(r.p_value),
        ]);
    }
    out.tables.push(t);

    // p-value aggregation, shown for comparison only
    let one_sided: Vec<f64> = results
        .iter()
        .map(|r| r.with_sidedness(Sidedness::OneSidedGreater).map(|x| x.p_value))
        .collect::<repmeta::Result<_>>()?;
    let fisher = fisher_pool(&one_sided)?;
    let stouffer = stouffer_pool(&one_sided, None)?;
    let votes = vote_count(&results, c.alpha)?;
    let mut t = Table::new(
        "pvalue_pooling",
        "Aggregation of p-values (comparison only)",
        &["method", "statistic", "df", "p_value", "k"],
    );
    t.push(vec!["fisher".into(), num(fisher.statistic, 2), opt(fisher.df.map(|d| d as f64), 0), p(fisher.p_value), fisher.k.to_string()]);
    t.push(vec!["stouffer".into(), num(stouffer.statistic, 2), "NA".into(), p(stouffer.p_value), stouffer.k.to_string()]);
    out.tables.push(t);
    out.text.push(format!(
        "Vote count at alpha = {}: {} significant positive, {} significant negative, {} non-significant; verdict: {}.",
        c.alpha,
        votes.significant_positive,
        votes.significant_negative,
        votes.non_significant,
        votes.verdict.as_str()
    ));
    out.note(GUIDELINE_1_WARNING);
    Ok(out)
}

// Step 3

pub struct AdResults {
    pub effects: Vec<EffectSize>,
    pub fixed: MetaResult,
    pub random: MetaResult,
    pub source: &'static str,
}

pub fn ad_results(c: &AnalysisConfig, inp: &Inputs) -> Result<AdResults> {
    let (rows, source) = inp.ad_rows()?;
    let effects = effect_sizes(&rows, c.hedges).context("step 3 (effect sizes)")?;
    let fixed = pool_fixed(&effects, c.alpha)?;
    let random = pool_random(&effects, TauEstimator::DerSimonianLaird, c.alpha)?;
    Ok(AdResults { effects, fixed, random, source })
}

pub fn lmm_options(c: &AnalysisConfig, alpha: f64) -> LmmOptions {
    LmmOptions { df_rule: c.df_rule, alpha, ..Default::default() }
}

fn meta_row(t: &mut Table, m: &MetaResult) {
    t.push(vec![
        serde_json::to_value(m.model).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        m.k.to_string(),
        num(m.pooled, 3),
        num(m.se, 3),
        num(m.ci_low, 3),
        num(m.ci_high, 3),
        p(m.p_value),
        num(m.tau2, 4),
        num(m.q, 2),
        m.q_df.to_string(),
        p(m.q_p),
        num(m.i2, 1),
        m.heterogeneity.as_str().into(),
    ]);
}

const META_HEADERS: [&str; 13] =
    ["model", "k", "pooled", "se", "ci_low", "ci_high", "p_value", "tau2", "q", "q_df", "q_p", "i2", "heterogeneity"];

pub fn aggregate(c: &AnalysisConfig, inp: &Inputs) -> Result<StepOutput> {
    let mut out = StepOutput::default();
    let ad = ad_results(c, inp)?;
    let kind = if c.hedges { "Hedges' g" } else { "Cohen's d" };
    let mut t = Table::new(
        "effect_sizes",
        &format!("Standardized effect sizes ({kind}) from the {}", ad.source),
        &["experiment", "d", "variance", "se", "n"],
    );
    for e in &ad.effects {
        t.push(vec![e.experiment_id.clone(), num(e.d, 3), num(e.variance, 4), num(e.se(), 3), e.n_effective.to_string()]);
    }
    out.tables.push(t);
    let mut t = Table::new("meta_ad", "AD meta-analysis", &META_HEADERS);
    meta_row(&mut t, &ad.fixed);
    meta_row(&mut t, &ad.random);
    out.tables.push(t);
    let model = forest_model(&ad.effects, &ad.random)?;
    out.figures.push(Figure {
        file: "forest.svg".into(),
        caption: format!("Forest plot: {} vs. {}", c.levels.control, c.levels.treatment),
        svg: render_forest(&model, &ForestOptions { width: c.width, ..Default::default() }).render(),
    });
    out.json.push((
        "meta_ad.json".into(),
        serde_json::to_string_pretty(&serde_json::json!({ "fixed": ad.fixed, "random": ad.random, "forest": model }))?
            + "\n",
    ));
    out.text.push(format!(
        "Random-effects (DerSimonian-Laird) pooled effect: {} [{}, {}], I\u{b2} = {}% ({} heterogeneity).",
        num(ad.random.pooled, 2),
        num(ad.random.ci_low, 2),
        num(ad.random.ci_high, 2),
        num(ad.random.i2, 1),
        ad.random.heterogeneity.as_str()
    ));
    for w in ad.random.warnings.iter().chain(&ad.fixed.warnings) {
        out.note(w.clone());
    }

    let Some(set) = &inp.raw else {
        out.note(IPD_NOTE);
        return Ok(out);
    };
    let fit = fit_lmm_reml(set, &ModelSpec::full(), &lmm_options(c, c.alpha)).context("step 3 (IPD-S LMM)")?;
    lmm_tables(c, &fit, &mut out)?;

    let mt = pooled_paired_t(set, Sidedness::TwoSided, c.alpha);
    let mega = fit_ols(set, false, c.alpha)?;
    let anova = fit_ols(set, true, c.alpha)?;
    let mut t = Table::new(
        "ipd_comparison",
        "Treatment effect under IPD-MT and fixed-effects IPD-S models",
        &["model", "estimate", "se", "ci_low", "ci_high", "p_value"],
    );
    if let Ok(mt) = &mt {
        let r = &mt.result;
        t.push(vec!["IPD-MT paired t".into(), num(r.estimate, 2), num(r.se, 2), num(r.ci_low, 2), num(r.ci_high, 2), p(r.p_value)]);
    }
    for (name, f) in [("IPD-MT least squares", &mega), ("IPD-S fixed (experiment factor)", &anova)] {
        let e = f.treatment();
        t.push(vec![name.into(), num(e.estimate, 2), num(e.se, 2), num(e.ci_low, 2), num(e.ci_high, 2), p(e.p_value)]);
    }
    let lt = fit.treatment();
    t.push(vec!["IPD-S LMM".into(), num(lt.estimate, 2), num(lt.se, 2), num(lt.ci_low, 2), num(lt.ci_high, 2), p(lt.p_value)]);
    out.detail_tables.push(t);
    out.note(GUIDELINE_2_WARNING);
    Ok(out)
}

fn lmm_tables(c: &AnalysisConfig, fit: &LmmFit, out: &mut StepOutput) -> Result<()> {
    let mut t = Table::new(
        "lmm_fixed",
        &format!("IPD-S linear mixed model: fixed effects (df rule: {})", c.df_rule.as_str()),
        &FIXED_HEADERS,
    );
    for f in &fit.fixed {
        fmt_fixed(&mut t, f);
    }
    out.tables.push(t);
    let v = &fit.variance;
    let mut t = Table::new("lmm_variance", "IPD-S linear mixed model: variance components", &["component", "variance", "sd"]);
    for (name, x) in [
        ("experiment intercept", v.experiment_intercept),
        ("experiment treatment slope", v.experiment_slope),
        ("participant intercept", v.participant),
        ("residual", v.residual),
    ] {
        t.push(vec![name.into(), num(x, 2), num(x.max(0.0).sqrt(), 2)]);
    }
    t.push(vec!["experiment intercept-slope covariance".into(), num(v.experiment_covariance, 2), "NA".into()]);
    out.tables.push(t);
    if let Some(cells) = &fit.cell_means {
        let mut t = Table::new("cell_means", "Estimated marginal means per arm", &["arm", "estimate", "se", "ci_low", "ci_high"]);
        for cm in cells {
            t.push(vec![
                c.levels.label(cm.arm).to_string(),
                num(cm.estimate, 2),
                num(cm.se, 2),
                num(cm.ci_low, 2),
                num(cm.ci_high, 2),
            ]);
        }
        out.tables.push(t);
    }
    let m = fit.treatment();
    let mut s = format!(
        "IPD-S mixed model: {} - {} = {} [{}, {}], p = {}; between-experiment sd of the effect {}.",
        c.levels.treatment,
        c.levels.control,
        num(m.estimate, 2),
        num(m.ci_low, 2),
        num(m.ci_high, 2),
        p(m.p_value),
        num(v.sd_diff(), 2)
    );
    if let Some(r) = fit.ratio {
        s.push_str(&format!(
            " The {} mean is {} times the {} mean.",
            c.levels.treatment,
            num(r, 2),
            c.levels.control
        ));
    }
    out.text.push(s);
    if !fit.converged {
        out.note("The mixed-model optimizer stopped before meeting its tolerance; treat the fit with caution.");
    }
    for w in &fit.warnings {
        out.note(w.clone());
    }
    out.json.push(("lmm.json".into(), serde_json::to_string_pretty(fit)? + "\n"));
    Ok(())
}

// Step 4

pub fn subgroup_labels(c: &AnalysisConfig, inp: &Inputs) -> Result<Option<BTreeMap<String, String>>> {
    if !c.subgroups.is_empty() {
        return Ok(Some(c.subgroups.clone()));
    }
    match &inp.covariates {
        Some(cov) => Ok(Some(
            cov.subject_type_by_experiment()?.into_iter().map(|(k, v)| (k, v.as_str().to_string())).collect(),
        )),
        None => Ok(None),
    }
}

pub fn moderators(c: &AnalysisConfig, inp: &Inputs) -> Result<StepOutput> {
    let mut out = StepOutput::default();
    let alpha = c.alpha_moderator;
    let labels = subgroup_labels(c, inp)?;
    if let Some(labels) = &labels {
        let ad = ad_results(c, inp)?;
        let effects = ad
            .effects
            .iter()
            .map(|e| {
                labels
                    .get(&e.experiment_id)
                    .map(|l| e.clone().with_subgroup(l.clone()))
                    .ok_or_else(|| UserError(format!("no subgroup label for `{}`", e.experiment_id)))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let est = c.subgroup_estimator;
        let sg = subgroup_analysis(&effects, est, alpha).context("step 4 (subgroup analysis)")?;
        let mut t = Table::new(
            "subgroups",
            &format!(
                "Subgroup meta-analysis ({} between-study variance, {}% intervals)",
                match est {
                    TauEstimator::DerSimonianLaird => "DerSimonian-Laird",
                    TauEstimator::Reml => "REML",
                },
                num(100.0 * (1.0 - alpha), 0)
            ),
            &["group", "k", "pooled", "ci_low", "ci_high", "p_value", "tau2", "i2"],
        );
        for (l, g) in sg.labels.iter().zip(&sg.groups) {
            t.push(vec![
                l.clone(),
                g.k.to_string(),
                num(g.pooled, 3),
                num(g.ci_low, 3),
                num(g.ci_high, 3),
                p(g.p_value),
                num(g.tau2, 4),
                num(g.i2, 1),
            ]);
        }
        if sg.labels.len() == 2 {
            t.push(vec![
                format!("{} - {}", sg.labels[1], sg.labels[0]),
                "NA".into(),
                num(sg.difference, 3),
                num(sg.difference_ci.0, 3),
                num(sg.difference_ci.1, 3),
                p(sg.difference_p),
                "NA".into(),
                "NA".into(),
            ]);
        }
        out.tables.push(t);

        if let Some(set) = &inp.raw {
            let fit = moderator_experiment_level(set, labels, "subject_type", &lmm_options(c, alpha))
                .context("step 4 (experiment-level moderator)")?;
            let mut t = Table::new("moderator_experiment", &format!("LMM with an experiment-level moderator (alpha = {alpha})"), &FIXED_HEADERS);
            for f in &fit.fixed {
                fmt_fixed(&mut t, f);
            }
            out.tables.push(t);
        }
    } else {
        out.note("Subgroup analyses need experiment labels: a covariate file or a [subgroups] table in the config.");
    }

    match (&inp.raw, &inp.covariates) {
        (Some(set), Some(cov)) => {
            let mut t = Table::new(
                "moderator_participant",
                &format!("LMM interactions with participant-level moderators (alpha = {alpha})"),
                &["covariate", "term", "estimate", "se", "df", "ci_low", "ci_high", "p_value", "candidate"],
            );
            let mut panels = Vec::new();
            for cv in Covariate::ALL {
                let fit = moderator_participant_level(set, cov, cv, c.separation, &lmm_options(c, alpha))
                    .with_context(|| format!("step 4 (moderator `{}`)", cv.name()))?;
                let inter = fit.interaction.clone().unwrap_or_default();
                for f in fit.fixed.iter().filter(|f| f.name.starts_with("treatment:")) {
                    let candidate = f.name == inter && f.p_value <= alpha;
                    t.push(vec![
                        cv.name().into(),
                        f.name.clone(),
                        num(f.estimate, 2),
                        num(f.se, 2),
                        opt(f.df, 0),
                        num(f.ci_low, 2),
                        num(f.ci_high, 2),
                        p(f.p_value),
                        if candidate { "yes" } else { "no" }.into(),
                    ]);
                }
                let xs: Vec<f64> = cov.rows.iter().map(|r| f64::from(r.value(cv))).collect();
                if let Some(panel) = InteractionPanel::from_fit(&fit, repmeta::plots::center(&xs)) {
                    panels.push(panel);
                }
                for w in &fit.warnings {
                    out.note(w.clone());
                }
            }
            out.tables.push(t);
            out.figures.push(Figure {
                file: "interactions.svg".into(),
                caption: "LMM interactions: participant-level moderators".into(),
                svg: render_interactions(&panels, c.width, c.height).render(),
            });
        }
        (None, _) => out.note(IPD_NOTE),
        (Some(_), None) => out.note("Participant-level moderators need a covariate file."),
    }
    Ok(out)
}

// Simulation

pub fn simulation_report(c: &AnalysisConfig) -> Result<BiasReport> {
    compare_mt_vs_s(&c.scenario, ExecutionMode::Parallel).context("simulation")
}

pub fn simulate(c: &AnalysisConfig) -> Result<StepOutput> {
    let mut out = StepOutput::default();
    let r = simulation_report(c)?;
    let mut t = Table::new(
        "simulation_summary",
        &format!("Imbalance simulation: {} iterations, seed {}", r.n_iterations, r.seed),
        &["estimator", "analytic", "mean", "sd", "q0.5", "q99.5"],
    );
    for s in [&r.ipd_mt, &r.ipd_s] {
        t.push(vec![s.name.clone(), num(s.analytic, 2), num(s.mean, 2), num(s.sd, 2), num(s.spread_99.0, 2), num(s.spread_99.1, 2)]);
    }
    out.tables.push(t);
    let mut t = Table::new("simulation_iterations", "Estimates per iteration", &["iteration", "ipd_mt", "ipd_s"]);
    for it in &r.iterations {
        t.push(vec![it.iteration.to_string(), num(it.ipd_mt, 4), num(it.ipd_s, 4)]);
    }
    out.detail_tables.push(t);
    out.note(GUIDELINE_2_WARNING);
    Ok(out)
}
