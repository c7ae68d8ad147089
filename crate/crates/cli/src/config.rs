//! Analysis configuration: a TOML file, overridden by command-line flags. The output
//! directory can also come from `REPMETA_OUT` (flag > env > file > `out`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use repmeta::data::TreatmentLevels;
use repmeta::individual::{DfConvention, Sidedness};
use repmeta::lmm::{DfRule, Separation};
use repmeta::meta::TauEstimator;
use repmeta::simulation::{ExperimentSpec, ScenarioSpec};
use serde::{Deserialize, Serialize};

use crate::UserError;

pub const OUT_ENV: &str = "REPMETA_OUT";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    data: DataSection,
    levels: Option<LevelsSection>,
    analysis: AnalysisSection,
    simulation: SimulationSection,
    output: OutputSection,
    /// Optional experiment -> subgroup label map; defaults to subject type from the covariates.
    subgroups: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DataSection {
    raw: Option<PathBuf>,
    summary: Option<PathBuf>,
    covariates: Option<PathBuf>,
    outcome_name: Option<String>,
    outcome_unit: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelsSection {
    control: String,
    treatment: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AnalysisSection {
    alpha: Option<f64>,
    alpha_moderator: Option<f64>,
    hedges: Option<bool>,
    sidedness: Option<Sidedness>,
    df_rule: Option<DfRule>,
    df_convention: Option<DfConvention>,
    welch: Option<bool>,
    separation: Option<Separation>,
    subgroup_estimator: Option<TauEstimator>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulationSection {
    seed: Option<u64>,
    iterations: Option<usize>,
    experiments: Option<Vec<ExperimentSpec>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
    width: Option<f64>,
    height: Option<f64>,
}

/// Values given on the command line; `None` leaves the file value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub alpha_moderator: Option<f64>,
    pub hedges: bool,
    pub df_rule: Option<DfRule>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub raw: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub raw: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub outcome_name: String,
    pub outcome_unit: String,
    pub levels: TreatmentLevels,
    pub alpha: f64,
    pub alpha_moderator: f64,
    pub hedges: bool,
    pub sidedness: Sidedness,
    pub df_rule: DfRule,
    pub df_convention: DfConvention,
    pub welch: bool,
    pub separation: Separation,
    pub subgroup_estimator: TauEstimator,
    pub subgroups: BTreeMap<String, String>,
    pub scenario: ScenarioSpec,
    #[serde(skip)]
    pub out: PathBuf,
    pub width: f64,
    pub height: f64,
    pub notes: Vec<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            raw: None,
            summary: None,
            covariates: None,
            outcome_name: "outcome".into(),
            outcome_unit: String::new(),
            levels: TreatmentLevels::default(),
            alpha: 0.05,
            alpha_moderator: 0.10,
            hedges: false,
            sidedness: Sidedness::TwoSided,
            df_rule: DfRule::default(),
            df_convention: DfConvention::default(),
            welch: true,
            separation: Separation::default(),
            subgroup_estimator: TauEstimator::Reml,
            subgroups: BTreeMap::new(),
            scenario: ScenarioSpec::imbalance_example(20200401, 1000),
            out: PathBuf::from("out"),
            width: repmeta::plots::DEFAULT_WIDTH,
            height: repmeta::plots::DEFAULT_HEIGHT,
            notes: Vec::new(),
        }
    }
}

fn relative_to(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl AnalysisConfig {
    /// Reads `path` (if any), applies `REPMETA_OUT` from `env_out` and then the flags.
    /// Relative paths in the file are taken relative to the file's directory.
    pub fn resolve(path: Option<&Path>, env_out: Option<PathBuf>, cli: &Overrides) -> Result<Self> {
        let (file, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UserError(format!("cannot read config `{}`: {e}", p.display())))?;
                let file: FileConfig = toml::from_str(&text)
                    .map_err(|e| UserError(format!("invalid config `{}`: {e}", p.display())))?;
                (file, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        let mut c = AnalysisConfig::default();
        c.raw = file.data.raw.map(|p| relative_to(&base, p));
        c.summary = file.data.summary.map(|p| relative_to(&base, p));
        c.covariates = file.data.covariates.map(|p| relative_to(&base, p));
        if let Some(n) = file.data.outcome_name {
            c.outcome_name = n;
        }
        if let Some(u) = file.data.outcome_unit {
            c.outcome_unit = u;
        }
        if let Some(l) = file.levels {
            c.levels = TreatmentLevels::new(l.control, l.treatment);
        }
        let a = file.analysis;
        c.alpha = a.alpha.unwrap_or(c.alpha);
        c.alpha_moderator = a.alpha_moderator.unwrap_or(c.alpha_moderator);
        c.hedges = a.hedges.unwrap_or(c.hedges);
        c.sidedness = a.sidedness.unwrap_or(c.sidedness);
        c.df_rule = a.df_rule.unwrap_or(c.df_rule);
        c.df_convention = a.df_convention.unwrap_or(c.df_convention);
        c.welch = a.welch.unwrap_or(c.welch);
        c.separation = a.separation.unwrap_or(c.separation);
        c.subgroup_estimator = a.subgroup_estimator.unwrap_or(c.subgroup_estimator);
        c.subgroups = file.subgroups;
        if let Some(e) = file.simulation.experiments {
            c.scenario.experiments = e;
        }
        c.scenario.seed = file.simulation.seed.unwrap_or(c.scenario.seed);
        c.scenario.n_iterations = file.simulation.iterations.unwrap_or(c.scenario.n_iterations);
        if let Some(d) = file.output.dir {
            c.out = relative_to(&base, d);
        }
        c.width = file.output.width.unwrap_or(c.width);
        c.height = file.output.height.unwrap_or(c.height);

        if let Some(d) = env_out {
            c.out = d;
        }
        if let Some(d) = &cli.out {
            c.out = d.clone();
        }
        c.raw = cli.raw.clone().or(c.raw);
        c.summary = cli.summary.clone().or(c.summary);
        c.covariates = cli.covariates.clone().or(c.covariates);
        c.alpha = cli.alpha.unwrap_or(c.alpha);
        c.alpha_moderator = cli.alpha_moderator.unwrap_or(c.alpha_moderator);
        c.hedges |= cli.hedges;
        c.df_rule = cli.df_rule.unwrap_or(c.df_rule);
        c.scenario.seed = cli.seed.unwrap_or(c.scenario.seed);
        c.scenario.n_iterations = cli.iterations.unwrap_or(c.scenario.n_iterations);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&mut self) -> Result<()> {
        for (name, a) in [("alpha", self.alpha), ("alpha_moderator", self.alpha_moderator)] {
            if !(a > 0.0 && a < 1.0) {
                return Err(UserError(format!("{name} must lie in (0, 1), got {a}")).into());
            }
        }
        if !(self.width >= 200.0 && self.height >= 200.0) {
            return Err(UserError("figure width and height must be at least 200 pixels".into()).into());
        }
        self.scenario.validate().map_err(|e| UserError(format!("simulation scenario: {e}")))?;
        if self.scenario.n_iterations == 0 {
            return Err(UserError("simulation iterations must be at least 1".into()).into());
        }
        self.notes.clear();
        if self.alpha_moderator > self.alpha {
            self.notes.push(format!(
                "Moderator analyses use a relaxed significance level ({} instead of {}); \
                 moderators flagged at this level are candidates for confirmation, not findings.",
                self.alpha_moderator, self.alpha
            ));
        }
        Ok(())
    }

    /// The settings echoed in the report footer. Output location is left out so the
    /// report does not depend on where it is written.
    pub fn echo(&self) -> Result<String> {
        let mut echo = self.clone();
        let name = |p: &Option<PathBuf>| p.as_ref().and_then(|p| p.file_name()).map(PathBuf::from);
        echo.raw = name(&self.raw);
        echo.summary = name(&self.summary);
        echo.covariates = name(&self.covariates);
        toml::to_string(&echo).context("serializing config echo")
    }
}
