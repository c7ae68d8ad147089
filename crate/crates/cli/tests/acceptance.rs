//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! The participant-level data shipped in data/illustrative is synthetic (see its
//! README). Criteria that need the original raw data are therefore run as property
//! checks on the synthetic set, and their comparison with the published numbers is
//! printed as `info` lines without deciding the outcome.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use repmeta::data::{
    complete_pairs, load_covariates, load_raw_dataset, load_summary_dataset, Arm, Covariate, CovariateTable,
    Design, Observation, PairedSample, ParseOptions, ReplicationSet, SummaryRow, TreatmentLevels,
};
use repmeta::descriptives::{summarize_all, summarize_covariates};
use repmeta::effect_size::{effect_size, effect_sizes, EffectSize};
use repmeta::individual::{
    analyze_all, independent_t_test, paired_t_test, DfConvention, IndividualOptions, Sidedness,
};
use repmeta::lmm::{
    fit_lmm_reml, fit_ols, moderator_experiment_level, moderator_participant_level, pooled_paired_t, DfRule, LmmFit,
    LmmOptions, ModelSpec, Separation,
};
use repmeta::meta::{pool_fixed, pool_random, subgroup_analysis, TauEstimator};
use repmeta::numerics::{chisq_cdf, cholesky, normal_cdf, normal_pdf, t_cdf, t_pdf, Matrix, SymmetricMatrix};
use repmeta::plots::{render_forest, ForestOptions};
use repmeta::pvalue::fisher_pool;
use repmeta::simulation::{compare_mt_vs_s, standard_normal, substream, ExecutionMode, ScenarioSpec};
use repmeta_cli::report::{build_report, Results};
use repmeta_cli::steps::Inputs;
use repmeta_cli::{AnalysisConfig, Overrides};

// Published values.
const TABLE_VI: [(&str, [(usize, f64, f64, f64); 2], f64); 4] = [
    ("F-Secure H", [(6, 30.71, 36.58, 24.16), (6, 40.23, 33.43, 35.34)], 0.59),
    ("F-Secure K", [(11, 22.17, 20.44, 17.98), (11, 35.42, 35.40, 22.41)], 0.42),
    ("F-Secure O", [(7, 16.05, 20.81, 7.87), (7, 68.97, 31.53, 81.03)], 0.52),
    ("UPV", [(31, 33.38, 39.79, 6.74), (29, 77.16, 21.04, 83.93)], 0.47),
];
const TABLE_IV: [(&str, [(f64, f64); 4]); 4] = [
    ("F-Secure H", [(3.67, 0.52), (2.33, 1.21), (2.17, 0.98), (2.17, 1.17)]),
    ("F-Secure K", [(2.91, 0.70), (1.82, 0.87), (1.64, 0.5), (1.27, 0.47)]),
    ("F-Secure O", [(3.29, 0.76), (2.71, 1.11), (2.71, 0.76), (2.0, 0.82)]),
    ("UPV", [(2.36, 0.57), (1.88, 0.60), (1.04, 0.20), (1.0, 0.0)]),
];
/// estimate, CI, p (None = printed as < 0.001)
const TABLE_VII: [(&str, f64, (f64, f64), Option<f64>); 4] = [
    ("F-Secure H", 9.52, (-19.58, 38.62), Some(0.483)),
    ("F-Secure K", 13.26, (-7.26, 33.77), Some(0.193)),
    ("F-Secure O", 52.91, (30.44, 75.39), None),
    ("UPV", 42.31, (29.02, 55.62), None),
];
const TABLE_IX: [(&str, f64, (f64, f64)); 3] = [
    ("professional", 0.77, (-0.13, 1.68)),
    ("student", 1.24, (0.72, 1.76)),
    ("difference", 0.47, (-0.58, 1.52)),
];
const TABLE_XI: [(Covariate, f64, f64); 4] = [
    (Covariate::Programming, 15.76, 1.5),
    (Covariate::Java, 3.85, 1.5),
    (Covariate::UnitTesting, 11.79, 2.0),
    (Covariate::Junit, 11.07, 2.0),
];

struct Outcome {
    id: u32,
    name: &'static str,
    checks: Vec<(String, bool)>,
    info: Vec<String>,
}

impl Outcome {
    fn new(id: u32, name: &'static str) -> Self {
        Self { id, name, checks: Vec::new(), info: Vec::new() }
    }

    fn check(&mut self, what: impl Into<String>, ok: bool) {
        self.checks.push((what.into(), ok));
    }

    fn info(&mut self, s: impl Into<String>) {
        self.info.push(s.into());
    }

    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.1)
    }

    fn print(&self) {
        println!("{} [{:>2}] {}", if self.passed() { "PASS" } else { "FAIL" }, self.id, self.name);
        for (what, ok) in &self.checks {
            println!("        {} {what}", if *ok { "ok  " } else { "MISS" });
        }
        for i in &self.info {
            println!("        info: {i}");
        }
    }
}

fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/illustrative")
}

fn levels() -> TreatmentLevels {
    TreatmentLevels::new("ITL", "TDD")
}

fn load() -> (ReplicationSet, CovariateTable) {
    let opts = ParseOptions { levels: levels(), ..Default::default() };
    let set = load_raw_dataset(dir().join("raw.csv"), &opts).unwrap();
    let cov = load_covariates(dir().join("covariates.csv"), &set).unwrap();
    (set, cov)
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol + 1e-12
}

fn flag(ok: bool) -> &'static str {
    if ok {
        "within"
    } else {
        "outside"
    }
}

// Independent oracles for descriptive statistics.
fn o_mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}
fn o_sd(x: &[f64]) -> f64 {
    let m = o_mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}
fn o_median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
fn o_corr(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (o_mean(x), o_mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Raw file read directly with the csv crate: experiment -> participant -> [control, treatment].
fn raw_oracle() -> BTreeMap<String, BTreeMap<String, [Option<f64>; 2]>> {
    let mut out: BTreeMap<String, BTreeMap<String, [Option<f64>; 2]>> = BTreeMap::new();
    let mut r = csv::Reader::from_path(dir().join("raw.csv")).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        let arm = if &rec[2] == "ITL" { 0 } else { 1 };
        let v = rec[3].trim().parse::<f64>().ok();
        out.entry(rec[0].to_string()).or_default().entry(rec[1].to_string()).or_default()[arm] = v;
    }
    out
}

fn c1_descriptives() -> Outcome {
    let mut o = Outcome::new(1, "descriptives (synthetic raw data; property check)");
    let t0 = Instant::now();
    let (set, cov) = load();
    let summaries = summarize_all(&set).unwrap();
    let cov_summary = summarize_covariates(&cov);
    let elapsed = t0.elapsed();
    o.check(format!("load + summarize in {:.3} s (< 1 s)", elapsed.as_secs_f64()), elapsed < Duration::from_secs(1));

    let oracle = raw_oracle();
    let mut worst: f64 = 0.0;
    for s in &summaries {
        let parts = &oracle[&s.experiment_id];
        for (k, arm) in [(0usize, Arm::Control), (1, Arm::Treatment)] {
            let xs: Vec<f64> = parts.values().filter_map(|p| p[k]).collect();
            let a = s.arm(arm);
            worst = worst
                .max((a.mean - o_mean(&xs)).abs())
                .max((a.sd - o_sd(&xs)).abs())
                .max((a.median - o_median(&xs)).abs());
            if a.n != xs.len() {
                worst = f64::INFINITY;
            }
        }
        let (c, t): (Vec<f64>, Vec<f64>) =
            parts.values().filter_map(|p| Some((p[0]?, p[1]?))).unzip();
        worst = worst.max((s.corr.unwrap() - o_corr(&c, &t)).abs());
    }
    o.check(format!("outcome descriptives match independent computation (max |diff| {worst:.1e} <= 1e-9)"), worst <= 1e-9);

    let mut worst_cov: f64 = 0.0;
    for s in &cov_summary {
        for cv in Covariate::ALL {
            let xs: Vec<f64> =
                cov.rows.iter().filter(|r| r.experiment_id == s.experiment_id).map(|r| f64::from(r.value(cv))).collect();
            worst_cov = worst_cov.max((s.get(cv).mean - o_mean(&xs)).abs()).max((s.get(cv).sd - o_sd(&xs)).abs());
        }
    }
    o.check(format!("covariate descriptives match independent computation (max |diff| {worst_cov:.1e} <= 1e-9)"), worst_cov <= 1e-9);

    let mut outside = Vec::new();
    let mut cells = 0;
    for (exp, arms, corr) in TABLE_VI {
        let s = summaries.iter().find(|s| s.experiment_id == exp).unwrap();
        for (k, arm) in Arm::BOTH.into_iter().enumerate() {
            let a = s.arm(arm);
            let (n, m, sd, med) = arms[k];
            cells += 4;
            if a.n != n {
                outside.push(format!("{exp} {arm:?} n {} vs {n}", a.n));
            }
            for (what, got, want) in [("mean", a.mean, m), ("sd", a.sd, sd), ("median", a.median, med)] {
                if !within(got, want, 0.005) {
                    outside.push(format!("{exp} {arm:?} {what} {got:.4} vs {want}"));
                }
            }
        }
        cells += 1;
        if !within(s.corr.unwrap(), corr, 0.005) {
            outside.push(format!("{exp} corr {:.4} vs {corr}", s.corr.unwrap()));
        }
    }
    o.info(format!("vs published descriptives table: {}/{} cells within ±0.005", cells - outside.len(), cells));
    for x in outside {
        o.info(format!("  outside: {x}"));
    }
    let mut cov_out = 0;
    for (exp, vals) in TABLE_IV {
        let s = cov_summary.iter().find(|s| s.experiment_id == exp).unwrap();
        for (cv, (m, sd)) in Covariate::ALL.into_iter().zip(vals) {
            if !within(s.get(cv).mean, m, 0.005) || !within(s.get(cv).sd, sd, 0.005) {
                cov_out += 1;
            }
        }
    }
    o.info(format!("vs published experience table: {}/32 cells within ±0.005", 32 - cov_out));
    o
}

fn c2_individual() -> Outcome {
    let mut o = Outcome::new(2, "individual analyses (synthetic raw data; property check)");
    let (set, _) = load();
    let opts = IndividualOptions { df_convention: DfConvention::ObservationsMinusTwo, ..Default::default() };
    let results = analyze_all(&set, &opts).unwrap();
    let oracle = raw_oracle();
    let mut worst: f64 = 0.0;
    for r in &results {
        let d: Vec<f64> = oracle[&r.experiment_id].values().filter_map(|p| Some(p[1]? - p[0]?)).collect();
        let n = d.len() as f64;
        worst = worst.max((r.estimate - o_mean(&d)).abs()).max((r.se - o_sd(&d) / n.sqrt()).abs());
        worst = worst.max((r.df - (2.0 * n - 2.0)).abs());
        // the interval is exactly where the two-sided test at alpha switches
        let half = (r.ci_high - r.ci_low) / 2.0;
        let edge = 2.0 * (1.0 - t_cdf(half / r.se, r.df).unwrap());
        worst = worst.max((edge - 0.05).abs());
    }
    o.check(format!("paired t on complete pairs matches independent computation (max |diff| {worst:.1e} <= 1e-8)"), worst <= 1e-8);
    let mut inside = 0;
    for (exp, est, (lo, hi), p) in TABLE_VII {
        let r = results.iter().find(|r| r.experiment_id == exp).unwrap();
        let ok_p = match p {
            Some(p) => within(r.p_value, p, 0.005),
            None => r.p_value < 0.001,
        };
        let ok = within(r.estimate, est, 0.01) && within(r.ci_low, lo, 0.02) && within(r.ci_high, hi, 0.02) && ok_p;
        inside += ok as usize;
        o.info(format!(
            "{exp}: {:.2} ({:.2}, {:.2}) p {:.4} vs published {est} ({lo}, {hi}) -> {}",
            r.estimate, r.ci_low, r.ci_high, r.p_value, flag(ok)
        ));
    }
    o.info(format!("{inside}/4 rows within the stated tolerances, using df = 2n - 2"));
    o
}

fn summary_rows() -> Vec<SummaryRow> {
    load_summary_dataset(dir().join("summary.csv")).unwrap()
}

fn c3_ad() -> Outcome {
    let mut o = Outcome::new(3, "AD random-effects pooling from the summary file");
    let rows = summary_rows();
    let e = effect_sizes(&rows, false).unwrap();
    let m = pool_random(&e, TauEstimator::DerSimonianLaird, 0.05).unwrap();
    o.check(format!("pooled d = {:.3} (0.90 ± 0.03)", m.pooled), within(m.pooled, 0.90, 0.03));
    o.check(format!("I² = {:.1}% (67.8 ± 3)", m.i2), within(m.i2, 67.8, 3.0));
    // hand derivation recorded in the effect-size module docs
    let hand = [0.2709, 0.4377, 1.8999, 1.2806];
    let ok = e.iter().zip(hand).all(|(x, h)| within(x.d, h, 5e-5));
    o.check("per-study d equal the hand derivation to 4 decimals", ok);
    o.check(format!("τ² = {:.4} (hand derivation 0.2837)", m.tau2), within(m.tau2, 0.2837, 5e-5));
    o
}

fn c4_fisher() -> Outcome {
    let mut o = Outcome::new(4, "Fisher pooling (synthetic raw data; property check)");
    let (set, _) = load();
    for conv in [DfConvention::PairsMinusOne, DfConvention::ObservationsMinusTwo] {
        let opts = IndividualOptions { sidedness: Sidedness::OneSidedGreater, df_convention: conv, ..Default::default() };
        let ps: Vec<f64> = analyze_all(&set, &opts).unwrap().iter().map(|r| r.p_value).collect();
        let f = fisher_pool(&ps).unwrap();
        let chi: f64 = -2.0 * ps.iter().map(|p| p.ln()).sum::<f64>();
        if conv == DfConvention::PairsMinusOne {
            o.check(format!("df = {:?} (exactly 8)", f.df), f.df == Some(8));
            o.check("statistic equals -2 Σ ln p", (f.statistic - chi).abs() < 1e-9);
            o.check("p-value equals the χ²(8) upper tail", (f.p_value - (1.0 - chisq_cdf(chi, 8.0).unwrap())).abs() < 1e-12);
        }
        o.info(format!(
            "χ² = {:.2} with {:?} per-replication df; published 47.13 -> {}",
            f.statistic,
            conv,
            flag(within(f.statistic, 47.13, 0.5))
        ));
    }
    o
}

fn c5_ipd_mt() -> Outcome {
    let mut o = Outcome::new(5, "IPD-MT and fixed-effects IPD-S (synthetic raw data; property check)");
    let (set, _) = load();
    let mt = pooled_paired_t(&set, Sidedness::TwoSided, 0.05).unwrap();
    let oracle = raw_oracle();
    let all: Vec<f64> = oracle.values().flat_map(|e| e.values().filter_map(|p| Some(p[1]? - p[0]?))).collect();
    o.check(
        format!("pooled paired t estimate {:.4} equals the mean of all {} complete-pair differences", mt.result.estimate, all.len()),
        (mt.result.estimate - o_mean(&all)).abs() < 1e-9,
    );
    o.check("IPD-MT output carries the Guideline-2 warning", mt.warning.contains("biased or underpowered results"));
    let anova = fit_ols(&set, true, 0.05).unwrap();
    // additive two-factor least squares: weights n_c n_t / (n_c + n_t) per experiment
    let (mut num, mut den) = (0.0, 0.0);
    for rep in &set.replications {
        let (c, t) = (rep.outcomes(Arm::Control), rep.outcomes(Arm::Treatment));
        let w = (c.len() * t.len()) as f64 / (c.len() + t.len()) as f64;
        num += w * (o_mean(&t) - o_mean(&c));
        den += w;
    }
    o.check(
        format!("experiment-factor estimate {:.4} equals the weighted within-experiment difference", anova.treatment().estimate),
        (anova.treatment().estimate - num / den).abs() < 1e-9,
    );
    o.info(format!("pooled paired t {:.2} vs published 33.67 ± 0.05 -> {}", mt.result.estimate, flag(within(mt.result.estimate, 33.67, 0.05))));
    o.info(format!(
        "experiment-factor estimate {:.2} vs published 34 ± 0.5 -> {}",
        anova.treatment().estimate,
        flag(within(anova.treatment().estimate, 34.0, 0.5))
    ));
    o
}

fn c6_lmm() -> Outcome {
    let mut o = Outcome::new(6, "IPD-S mixed model (synthetic raw data; property check)");
    let (set, _) = load();
    let t0 = Instant::now();
    let opts = LmmOptions { df_rule: DfRule::WithinParticipant, ..Default::default() };
    let fit = fit_lmm_reml(&set, &ModelSpec::full(), &opts).unwrap();
    let elapsed = t0.elapsed();
    o.check(format!("fit in {:.2} s (< 10 s)", elapsed.as_secs_f64()), elapsed < Duration::from_secs(10));
    o.check("optimizer converged", fit.converged);
    let cells = fit.cell_means.as_ref().unwrap();
    let b0 = fit.coefficient("(intercept)").unwrap().estimate;
    let m = fit.treatment();
    o.check(
        "cell means are intercept and intercept + treatment; ratio is their quotient",
        (cells[0].estimate - b0).abs() < 1e-9
            && (cells[1].estimate - b0 - m.estimate).abs() < 1e-9
            && (fit.ratio.unwrap() - cells[1].estimate / cells[0].estimate).abs() < 1e-12,
    );
    o.check("sd_diff is the square root of the slope variance", (fit.variance.sd_diff() - fit.variance.experiment_slope.sqrt()).abs() < 1e-12);
    // REML optimum: perturbing the data's treatment column changes nothing structural,
    // so check the criterion against a fit started elsewhere instead
    let mut alt = opts.clone();
    alt.optimizer.initial_step = Some(vec![0.5; 4]);
    let fit2 = fit_lmm_reml(&set, &ModelSpec::full(), &alt).unwrap();
    o.check(
        format!("REML criterion reproducible from a different start ({:.4} vs {:.4})", fit.reml_criterion.unwrap(), fit2.reml_criterion.unwrap()),
        (fit.reml_criterion.unwrap() - fit2.reml_criterion.unwrap()).abs() < 1e-4,
    );
    let sd = fit.variance.sd_diff();
    let r = fit.ratio.unwrap();
    o.info(format!("M_diff {:.2} vs 28.83 ± 0.5 -> {}", m.estimate, flag(within(m.estimate, 28.83, 0.5))));
    o.info(format!("sd_diff {sd:.2} vs 16.09 ± 1.5 -> {}", flag(within(sd, 16.09, 1.5))));
    o.info(format!(
        "cells {:.2} / {:.2} vs 27.44 / 56.27 ± 0.5 -> {} / {}",
        cells[0].estimate,
        cells[1].estimate,
        flag(within(cells[0].estimate, 27.44, 0.5)),
        flag(within(cells[1].estimate, 56.27, 0.5))
    ));
    o.info(format!("ratio {r:.3} in [1.9, 2.2] -> {}", flag((1.9..=2.2).contains(&r))));
    o.info(format!("p {:.4} with df {} (within-participant rule); p <= 0.01 -> {}", m.p_value, m.df.unwrap(), flag(m.p_value <= 0.01)));
    for rule in [DfRule::ExperimentsMinusOne, DfRule::Z] {
        let f = fit_lmm_reml(&set, &ModelSpec::full(), &LmmOptions { df_rule: rule, ..Default::default() }).unwrap();
        o.info(format!("  p under {}: {:.4}", rule.as_str(), f.treatment().p_value));
    }
    o
}

fn labelled(e: &[EffectSize]) -> Vec<EffectSize> {
    e.iter()
        .map(|x| x.clone().with_subgroup(if x.experiment_id == "UPV" { "student" } else { "professional" }))
        .collect()
}

fn c7_subgroups() -> Outcome {
    let mut o = Outcome::new(7, "subgroup meta-analysis from the summary file (REML τ², uncorrected d)");
    let rows = summary_rows();
    let run = |hedges: bool, est: TauEstimator| {
        let e = labelled(&effect_sizes(&rows, hedges).unwrap());
        subgroup_analysis(&e, est, 0.05).unwrap()
    };
    let sg = run(false, TauEstimator::Reml);
    let got = [
        (sg.groups[0].pooled, (sg.groups[0].ci_low, sg.groups[0].ci_high)),
        (sg.groups[1].pooled, (sg.groups[1].ci_low, sg.groups[1].ci_high)),
        (sg.difference, sg.difference_ci),
    ];
    o.check(format!("group order {:?}", sg.labels), sg.labels == ["professional", "student"]);
    for ((name, est, (lo, hi)), (g, (glo, ghi))) in TABLE_IX.iter().zip(got) {
        o.check(
            format!("{name}: {g:.3} ({glo:.3}, {ghi:.3}) vs {est} ({lo}, {hi}), ±0.08 / ±0.15"),
            within(g, *est, 0.08) && within(glo, *lo, 0.15) && within(ghi, *hi, 0.15),
        );
    }
    o.check(format!("singleton group I² = {} (exactly 0)", sg.groups[1].i2), sg.groups[1].i2 == 0.0);
    for (hedges, est) in [(true, TauEstimator::Reml), (false, TauEstimator::DerSimonianLaird), (true, TauEstimator::DerSimonianLaird)] {
        let s = run(hedges, est);
        o.info(format!(
            "hedges={hedges} {est:?}: professional {:.3} ({:.3}, {:.3}), student {:.3}, difference {:.3} ({:.3}, {:.3})",
            s.groups[0].pooled, s.groups[0].ci_low, s.groups[0].ci_high, s.groups[1].pooled, s.difference, s.difference_ci.0, s.difference_ci.1
        ));
    }
    o
}

fn c8_moderators() -> Outcome {
    let mut o = Outcome::new(8, "moderator mixed models (synthetic raw data; property check)");
    let (set, cov) = load();
    let opts = LmmOptions { df_rule: DfRule::WithinParticipant, alpha: 0.10, ..Default::default() };
    let labels: BTreeMap<String, String> =
        cov.subject_type_by_experiment().unwrap().into_iter().map(|(k, v)| (k, v.as_str().to_string())).collect();
    let x = moderator_experiment_level(&set, &labels, "subject_type", &opts).unwrap();
    let inter = x.interaction_effect().unwrap();
    o.check(format!("experiment-level interaction term `{}` estimated", inter.name), inter.estimate.is_finite() && x.converged);
    // reversing the 1..4 scale (x -> 5 - x) flips the naive interaction exactly
    let mut flipped = cov.clone();
    for r in &mut flipped.rows {
        r.programming = 5 - r.programming;
    }
    let a = moderator_participant_level(&set, &cov, Covariate::Programming, Separation::Naive, &opts).unwrap();
    let b = moderator_participant_level(&set, &flipped, Covariate::Programming, Separation::Naive, &opts).unwrap();
    let (ia, ib) = (a.interaction_effect().unwrap(), b.interaction_effect().unwrap());
    o.check(
        format!("reversed covariate scale flips the interaction ({:.4} vs {:.4})", ia.estimate, ib.estimate),
        (ia.estimate + ib.estimate).abs() < 1e-3 * (1.0 + ia.estimate.abs()) && (ia.p_value - ib.p_value).abs() < 1e-3,
    );
    o.info(format!("subject type interaction {:.2} vs published 16.32 ± 2.0 -> {}", inter.estimate, flag(within(inter.estimate, 16.32, 2.0))));
    for sep in [Separation::WithinBetween, Separation::Naive] {
        for (cv, target, tol) in TABLE_XI {
            let f: LmmFit = moderator_participant_level(&set, &cov, cv, sep, &opts).unwrap();
            let i = f.interaction_effect().unwrap();
            o.info(format!(
                "{sep:?} {}: {:.2} (p {:.3}{}) vs published {target} ± {tol} -> {}",
                cv.name(),
                i.estimate,
                i.p_value,
                if i.p_value <= 0.10 { ", flagged" } else { "" },
                flag(within(i.estimate, target, tol))
            ));
        }
    }
    o
}

fn c9_simulation() -> Outcome {
    let mut o = Outcome::new(9, "imbalance simulation, 1000 iterations");
    let spec = ScenarioSpec::imbalance_example(20200401, 1000);
    let t0 = Instant::now();
    let r = compare_mt_vs_s(&spec, ExecutionMode::Parallel).unwrap();
    let elapsed = t0.elapsed();
    o.check(format!("runtime {:.2} s (< 5 s)", elapsed.as_secs_f64()), elapsed < Duration::from_secs(5));
    o.check(format!("IPD-MT mean {:.3} within ±0.7 of 42", r.ipd_mt.mean), within(r.ipd_mt.mean, 42.0, 0.7));
    o.check(format!("IPD-S mean {:.3} within ±0.7 of 10", r.ipd_s.mean), within(r.ipd_s.mean, 10.0, 0.7));
    let (lo, hi) = r.ipd_mt.spread_99;
    o.check(format!("41.17 inside the IPD-MT 99% spread ({lo:.2}, {hi:.2})"), (lo..=hi).contains(&41.17));
    let (lo, hi) = r.ipd_s.spread_99;
    o.check(format!("9.55 inside the IPD-S 99% spread ({lo:.2}, {hi:.2})"), (lo..=hi).contains(&9.55));
    let again = compare_mt_vs_s(&spec, ExecutionMode::Sequential).unwrap();
    o.check("sequential re-run is bit-identical", again == r);
    o
}

// Criterion 10 helpers.

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let n = 20_000;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn c10_properties() -> Outcome {
    let mut o = Outcome::new(10, "property suites");

    let mut worst: f64 = 0.0;
    for x in [-6.0, -2.5, -1.0, 0.3, 1.96, 4.0] {
        worst = worst.max((normal_cdf(x) - (0.5 + simpson(&normal_pdf, 0.0, x))).abs());
        for df in [1.0, 3.0, 10.0, 57.0] {
            worst = worst.max((t_cdf(x, df).unwrap() - (0.5 + simpson(&|u| t_pdf(u, df), 0.0, x))).abs());
        }
    }
    for (x, k) in [(1.0, 2.0), (7.8, 3.0), (15.5, 8.0), (47.13, 8.0)] {
        let pdf = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            ((k / 2.0 - 1.0) * u.ln() - u / 2.0 - (k / 2.0) * 2f64.ln() - repmeta::numerics::special::ln_gamma(k / 2.0)).exp()
        };
        // u = s² removes the √u behaviour at the origin
        let smooth = |t: f64| 2.0 * t * pdf(t * t);
        worst = worst.max((chisq_cdf(x, k).unwrap() - simpson(&smooth, 0.0, x.sqrt())).abs());
    }
    o.check(format!("normal/t/χ² cdfs vs quadrature (max |diff| {worst:.1e} <= 1e-8)"), worst <= 1e-8);

    let mut worst: f64 = 0.0;
    for n in [1usize, 3, 8, 20] {
        let mut rng = substream(7, n as u64, 0, 0);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| standard_normal(&mut rng)).collect()).collect();
        let b = Matrix::from_rows(&rows);
        let mut a = b.matmul(&b.transpose());
        let full: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)] + if i == j { 1.0 } else { 0.0 }).collect()).collect();
        a = Matrix::from_rows(&full);
        let s = SymmetricMatrix::from_full(&full);
        let back = cholesky(&s).unwrap().reconstruct();
        let scale = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((back.get(i, j) - s.get(i, j)).abs() / scale);
            }
        }
    }
    o.check(format!("Cholesky reconstruction (max relative error {worst:.1e} <= 1e-10)"), worst <= 1e-10);

    let es = |d: &[f64], v: &[f64]| -> Vec<EffectSize> {
        d.iter()
            .zip(v)
            .enumerate()
            .map(|(i, (d, v))| EffectSize {
                experiment_id: format!("E{i}"),
                d: *d,
                variance: *v,
                n_effective: 10,
                df: 9.0,
                corrected: false,
                subgroup_label: None,
                moderator_x: None,
            })
            .collect()
    };
    let same = es(&[0.4; 5], &[0.1, 0.2, 0.05, 0.3, 0.15]);
    let (f, r) = (pool_fixed(&same, 0.05).unwrap(), pool_random(&same, TauEstimator::DerSimonianLaird, 0.05).unwrap());
    o.check("DL and fixed coincide when τ² = 0", r.tau2 == 0.0 && (f.pooled - r.pooled).abs() < 1e-12 && (f.se - r.se).abs() < 1e-12);
    let mut convex = true;
    for seed in 0..200u64 {
        let mut rng = substream(11, seed, 0, 0);
        let k = 2 + (seed % 9) as usize;
        let d: Vec<f64> = (0..k).map(|_| 2.0 * standard_normal(&mut rng)).collect();
        let v: Vec<f64> = (0..k).map(|_| 0.01 + standard_normal(&mut rng).abs()).collect();
        let e = es(&d, &v);
        let (lo, hi) = d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
        for m in [pool_fixed(&e, 0.05).unwrap(), pool_random(&e, TauEstimator::DerSimonianLaird, 0.05).unwrap(), pool_random(&e, TauEstimator::Reml, 0.05).unwrap()] {
            convex &= m.pooled >= lo - 1e-12 && m.pooled <= hi + 1e-12;
        }
    }
    o.check("pooled estimates lie within [min d, max d] (200 random sets)", convex);

    // affine invariance: y -> a + b y
    let (a, b) = (-12.0, 3.0);
    let (set, _) = load();
    let mut moved = set.clone();
    for rep in &mut moved.replications {
        for ob in &mut rep.observations {
            ob.outcome = ob.outcome.map(|y| a + b * y);
        }
    }
    let close = |x: f64, y: f64, tol: f64| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs()));
    let mut ok = true;
    for (r0, r1) in set.replications.iter().zip(&moved.replications) {
        let (p0, p1): (PairedSample, PairedSample) = (complete_pairs(r0).unwrap(), complete_pairs(r1).unwrap());
        let (t0, t1) = (paired_t_test(&p0, Sidedness::TwoSided, 0.05).unwrap(), paired_t_test(&p1, Sidedness::TwoSided, 0.05).unwrap());
        ok &= close(t1.estimate, b * t0.estimate, 1e-9) && close(t1.t, t0.t, 1e-9) && close(t1.p_value, t0.p_value, 1e-9);
        let w = |r: &repmeta::data::Replication, arm| r.outcomes(arm);
        let (i0, i1) = (
            independent_t_test("E", &w(r0, Arm::Control), &w(r0, Arm::Treatment), true, Sidedness::TwoSided, 0.05).unwrap(),
            independent_t_test("E", &w(r1, Arm::Control), &w(r1, Arm::Treatment), true, Sidedness::TwoSided, 0.05).unwrap(),
        );
        ok &= close(i1.estimate, b * i0.estimate, 1e-9) && close(i1.t, i0.t, 1e-9);
    }
    o.check("t-tests: estimates scale, t and p unchanged", ok);
    let rows0 = repmeta::effect_size::ad_summary_rows(&set).unwrap();
    let rows1 = repmeta::effect_size::ad_summary_rows(&moved).unwrap();
    let ok = rows0.iter().zip(&rows1).all(|(x, y)| {
        let (ex, ey) = (effect_size(x).unwrap(), effect_size(y).unwrap());
        close(ex.d, ey.d, 1e-9) && close(ex.variance, ey.variance, 1e-9)
    });
    o.check("effect sizes unchanged", ok);
    let f0 = fit_lmm_reml(&set, &ModelSpec::full(), &LmmOptions::default()).unwrap();
    let f1 = fit_lmm_reml(&moved, &ModelSpec::full(), &LmmOptions::default()).unwrap();
    let ok = close(f1.treatment().estimate, b * f0.treatment().estimate, 1e-4)
        && close(f1.treatment().se, b * f0.treatment().se, 1e-4)
        && close(f1.variance.residual, b * b * f0.variance.residual, 1e-4);
    o.check(
        format!("LMM: M_diff {:.4} -> {:.4} (x{b}), variances scale by b²", f0.treatment().estimate, f1.treatment().estimate),
        ok,
    );

    // REML recovery: mean over independent replications of 30 experiments × 30 participants
    let (s0, s1, sp, se, effect) = (4.0, 3.0, 5.0, 6.0, 12.0);
    let reps = 12u64;
    let mut est: Vec<[f64; 5]> = Vec::new();
    for rep in 0..reps {
        let mut obs = Vec::new();
        for e in 0..30u64 {
            let mut rng = substream(2025, rep, e, 0);
            let (ea, eb) = (s0 * standard_normal(&mut rng), s1 * standard_normal(&mut rng));
            for p in 0..30 {
                let u = sp * standard_normal(&mut rng);
                for arm in Arm::BOTH {
                    obs.push(Observation {
                        experiment_id: format!("E{e:02}"),
                        participant_id: format!("P{p:02}"),
                        arm,
                        outcome: Some(50.0 + ea + (effect + eb) * arm.indicator() + u + se * standard_normal(&mut rng)),
                    });
                }
            }
        }
        let sim = ReplicationSet::from_observations(obs, &BTreeMap::new(), TreatmentLevels::default(), "y", "").unwrap();
        assert!(sim.replications.iter().all(|r| r.design == Design::Within));
        let fit = fit_lmm_reml(&sim, &ModelSpec::full(), &LmmOptions::default()).unwrap();
        let v = &fit.variance;
        est.push([v.experiment_intercept, v.experiment_slope, v.participant, v.residual, fit.treatment().estimate]);
    }
    let truth = [s0 * s0, s1 * s1, sp * sp, se * se, effect];
    let mut ok = true;
    let mut shown = Vec::new();
    for k in 0..5 {
        let xs: Vec<f64> = est.iter().map(|e| e[k]).collect();
        let (m, sem) = (o_mean(&xs), o_sd(&xs) / (reps as f64).sqrt());
        ok &= (m - truth[k]).abs() <= 3.0 * sem;
        shown.push(format!("{m:.2}±{sem:.2}/{}", truth[k]));
    }
    o.check(format!("REML recovery, mean of {reps} replications within 3 SE of truth: {}", shown.join(", ")), ok);

    // byte determinism of figures and the report
    let rows = summary_rows();
    let e = effect_sizes(&rows, false).unwrap();
    let m = pool_random(&e, TauEstimator::DerSimonianLaird, 0.05).unwrap();
    let model = repmeta::meta::forest_model(&e, &m).unwrap();
    let svg1 = render_forest(&model, &ForestOptions::default()).render();
    let svg2 = render_forest(&model.clone(), &ForestOptions::default()).render();
    o.check("forest SVG byte-identical across renders", svg1 == svg2 && svg1.contains("I\u{b2} = 68.1%"));
    let overrides = Overrides { iterations: Some(50), ..Default::default() };
    let report = || {
        let c = AnalysisConfig::resolve(Some(&dir().join("config.toml")), None, &overrides).unwrap();
        let inp = Inputs::load(&c).unwrap();
        build_report(&c, &inp, &Results::run(&c, &inp).unwrap()).unwrap()
    };
    o.check("report byte-identical across runs", report() == report());
    o
}

fn main() -> ExitCode {
    let criteria: [fn() -> Outcome; 10] = [
        c1_descriptives,
        c2_individual,
        c3_ad,
        c4_fisher,
        c5_ipd_mt,
        c6_lmm,
        c7_subgroups,
        c8_moderators,
        c9_simulation,
        c10_properties,
    ];
    let mut failed = 0;
    for c in criteria {
        let o = c();
        o.print();
        failed += usize::from(!o.passed());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
