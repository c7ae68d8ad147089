//! Participant-level data, summary tables and covariates: loading, validation, indexing.
//!
//! Raw outcomes are kept in long format, one row per (experiment, participant, arm).
//! A missing outcome is an empty cell and stays missing; it is never dropped at load time.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RAW_HEADER: [&str; 4] = ["experiment_id", "participant_id", "treatment", "outcome"];
pub const SUMMARY_HEADER: [&str; 9] = [
    "experiment_id",
    "n_control",
    "n_treatment",
    "mean_control",
    "sd_control",
    "mean_treatment",
    "sd_treatment",
    "corr",
    "design",
];
pub const COVARIATE_HEADER: [&str; 7] = [
    "experiment_id",
    "participant_id",
    "subject_type",
    "programming",
    "java",
    "unit_testing",
    "junit",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treatment];

    pub fn indicator(self) -> f64 {
        match self {
            Arm::Control => 0.0,
            Arm::Treatment => 1.0,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Control => "control",
            Arm::Treatment => "treatment",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Every participant is measured under both arms (AB repeated measures).
    Within,
    /// Each participant is measured under one arm.
    Between,
}

impl Design {
    fn parse(s: &str) -> Option<Design> {
        match s.trim().to_ascii_lowercase().as_str() {
            "within" | "within-subjects" | "within_subjects" => Some(Design::Within),
            "between" | "between-subjects" | "between_subjects" => Some(Design::Between),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Design::Within => "within",
            Design::Between => "between",
        }
    }
}

/// Labels used in the data files for the two arms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentLevels {
    pub control: String,
    pub treatment: String,
}

impl Default for TreatmentLevels {
    fn default() -> Self {
        Self { control: "control".into(), treatment: "treatment".into() }
    }
}

impl TreatmentLevels {
    pub fn new(control: impl Into<String>, treatment: impl Into<String>) -> Self {
        Self { control: control.into(), treatment: treatment.into() }
    }

    pub fn arm(&self, label: &str) -> Option<Arm> {
        if label == self.control {
            Some(Arm::Control)
        } else if label == self.treatment {
            Some(Arm::Treatment)
        } else {
            None
        }
    }

    pub fn label(&self, arm: Arm) -> &str {
        match arm {
            Arm::Control => &self.control,
            Arm::Treatment => &self.treatment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParticipantKey {
    pub experiment_id: String,
    pub participant_id: String,
}

impl ParticipantKey {
    pub fn new(experiment_id: impl Into<String>, participant_id: impl Into<String>) -> Self {
        Self { experiment_id: experiment_id.into(), participant_id: participant_id.into() }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub levels: TreatmentLevels,
    /// Design per experiment; unlisted experiments are inferred from the data.
    pub designs: BTreeMap<String, Design>,
    pub outcome_name: String,
    pub outcome_unit: String,
    /// Participants removed before validation.
    pub exclude: Vec<ParticipantKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub experiment_id: String,
    pub participant_id: String,
    pub arm: Arm,
    pub outcome: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    pub experiment_id: String,
    pub design: Design,
    pub observations: Vec<Observation>,
}

impl Replication {
    /// Non-missing outcomes of one arm, in file order.
    pub fn outcomes(&self, arm: Arm) -> Vec<f64> {
        self.observations
            .iter()
            .filter(|o| o.arm == arm)
            .filter_map(|o| o.outcome)
            .collect()
    }

    /// Distinct participant ids, sorted.
    pub fn participants(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.observations.iter().map(|o| o.participant_id.as_str()).collect();
        set.into_iter().collect()
    }

    /// Participants with at least one non-missing outcome.
    pub fn participants_with_data(&self) -> usize {
        self.observations
            .iter()
            .filter(|o| o.outcome.is_some())
            .map(|o| o.participant_id.as_str())
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn outcome(&self, participant_id: &str, arm: Arm) -> Option<f64> {
        self.observations
            .iter()
            .find(|o| o.participant_id == participant_id && o.arm == arm)
            .and_then(|o| o.outcome)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationSet {
    pub replications: Vec<Replication>,
    pub outcome_name: String,
    pub outcome_unit: String,
    pub levels: TreatmentLevels,
}

impl ReplicationSet {
    /// Builds and validates a set from observations; replications keep first-appearance order.
    pub fn from_observations(
        observations: Vec<Observation>,
        designs: &BTreeMap<String, Design>,
        levels: TreatmentLevels,
        outcome_name: impl Into<String>,
        outcome_unit: impl Into<String>,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::NoData);
        }
        let mut seen = HashSet::new();
        let mut order: Vec<String> = Vec::new();
        let mut grouped: HashMap<String, Vec<Observation>> = HashMap::new();
        for o in observations {
            if let Some(v) = o.outcome {
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "non-finite outcome for participant `{}` of `{}`",
                        o.participant_id, o.experiment_id
                    )));
                }
            }
            if !seen.insert((o.experiment_id.clone(), o.participant_id.clone(), o.arm)) {
                return Err(Error::Duplicate {
                    experiment: o.experiment_id,
                    participant: o.participant_id,
                    treatment: levels.label(o.arm).to_string(),
                });
            }
            if !grouped.contains_key(&o.experiment_id) {
                order.push(o.experiment_id.clone());
            }
            grouped.entry(o.experiment_id.clone()).or_default().push(o);
        }
        let mut replications = Vec::with_capacity(order.len());
        for id in order {
            let observations = grouped.remove(&id).unwrap_or_default();
            let design = designs.get(&id).copied().unwrap_or_else(|| infer_design(&observations));
            let rep = Replication { experiment_id: id, design, observations };
            if rep.participants_with_data() == 0 {
                return Err(Error::InsufficientData(format!(
                    "replication `{}` has no participant with an observed outcome",
                    rep.experiment_id
                )));
            }
            replications.push(rep);
        }
        Ok(Self { replications, outcome_name: outcome_name.into(), outcome_unit: outcome_unit.into(), levels })
    }

    pub fn replication(&self, experiment_id: &str) -> Option<&Replication> {
        self.replications.iter().find(|r| r.experiment_id == experiment_id)
    }

    pub fn experiment_ids(&self) -> Vec<&str> {
        self.replications.iter().map(|r| r.experiment_id.as_str()).collect()
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.replications.iter().flat_map(|r| r.observations.iter())
    }

    pub fn contains_participant(&self, experiment_id: &str, participant_id: &str) -> bool {
        self.replication(experiment_id)
            .is_some_and(|r| r.observations.iter().any(|o| o.participant_id == participant_id))
    }

    /// Long-format CSV in the raw-data schema.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let rows = std::iter::once(RAW_HEADER.iter().map(|h| h.to_string()).collect::<Vec<_>>()).chain(
            self.observations().map(|o| {
                vec![
                    o.experiment_id.clone(),
                    o.participant_id.clone(),
                    self.levels.label(o.arm).to_string(),
                    o.outcome.map(|v| format!("{v}")).unwrap_or_default(),
                ]
            }),
        );
        for r in rows {
            w.write_record(&r).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("in-memory buffer")).expect("utf-8 input")
    }
}

fn infer_design(observations: &[Observation]) -> Design {
    let mut arms: HashMap<&str, BTreeSet<Arm>> = HashMap::new();
    for o in observations {
        arms.entry(&o.participant_id).or_default().insert(o.arm);
    }
    if arms.values().any(|a| a.len() == 2) {
        Design::Within
    } else {
        Design::Between
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
    if header.iter().eq(expected.iter().copied()) {
        Ok(())
    } else if header.iter().all(str::is_empty) {
        Err(Error::NoData)
    } else {
        Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        })
    }
}

fn record_line(r: &csv::StringRecord) -> u64 {
    r.position().map_or(0, |p| p.line())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse { line, message: e.to_string() }
}

pub fn load_raw_dataset(path: impl AsRef<Path>, options: &ParseOptions) -> Result<ReplicationSet> {
    parse_raw_csv(&read_file(path.as_ref())?, options)
}

pub fn parse_raw_csv(text: &str, options: &ParseOptions) -> Result<ReplicationSet> {
    if text.trim().is_empty() {
        return Err(Error::NoData);
    }
    let mut rdr = reader(text);
    check_header(&mut rdr, &RAW_HEADER)?;
    let excluded: HashSet<&ParticipantKey> = options.exclude.iter().collect();
    let mut observations = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = record_line(&rec);
        let (exp, pid, label, value) = (&rec[0], &rec[1], &rec[2], &rec[3]);
        if exp.is_empty() || pid.is_empty() {
            return Err(Error::Parse { line, message: "empty experiment or participant id".into() });
        }
        let arm = options
            .levels
            .arm(label)
            .ok_or_else(|| Error::UnknownTreatment { line, label: label.to_string() })?;
        let outcome = if value.is_empty() {
            None
        } else {
            let v: f64 = value
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("outcome `{value}` is not a number") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("non-finite outcome `{value}`") });
            }
            Some(v)
        };
        if excluded.contains(&ParticipantKey::new(exp, pid)) {
            continue;
        }
        observations.push(Observation {
            experiment_id: exp.to_string(),
            participant_id: pid.to_string(),
            arm,
            outcome,
        });
    }
    if observations.is_empty() {
        return Err(Error::NoData);
    }
    ReplicationSet::from_observations(
        observations,
        &options.designs,
        options.levels.clone(),
        options.outcome_name.clone(),
        options.outcome_unit.clone(),
    )
}

/// Per-replication summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment_id: String,
    pub n_control: usize,
    pub n_treatment: usize,
    pub mean_control: f64,
    pub sd_control: f64,
    pub mean_treatment: f64,
    pub sd_treatment: f64,
    /// Paired correlation; present exactly for within-subjects rows.
    pub corr: Option<f64>,
    pub design: Design,
}

impl SummaryRow {
    pub fn validate(&self) -> Result<()> {
        let id = &self.experiment_id;
        if self.n_control < 2 || self.n_treatment < 2 {
            return Err(Error::Validation(format!("`{id}`: each arm needs n >= 2")));
        }
        for v in [self.mean_control, self.mean_treatment, self.sd_control, self.sd_treatment] {
            if !v.is_finite() {
                return Err(Error::Validation(format!("`{id}`: non-finite summary value")));
            }
        }
        if self.sd_control < 0.0 || self.sd_treatment < 0.0 {
            return Err(Error::Validation(format!("`{id}`: standard deviations must be >= 0")));
        }
        match (self.design, self.corr) {
            (Design::Within, None) => {
                Err(Error::Validation(format!("`{id}`: within-subjects row needs a correlation")))
            }
            (Design::Between, Some(_)) => {
                Err(Error::Validation(format!("`{id}`: between-subjects row must not carry a correlation")))
            }
            (_, Some(r)) if !(-1.0..=1.0).contains(&r) => {
                Err(Error::Validation(format!("`{id}`: correlation {r} outside [-1, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Number of complete pairs behind a within-subjects row. Summary tables do not
    /// record it directly; the smaller arm is the largest possible value.
    pub fn n_pairs(&self) -> usize {
        self.n_control.min(self.n_treatment)
    }
}

pub fn load_summary_dataset(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    parse_summary_csv(&read_file(path.as_ref())?)
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    if text.trim().is_empty() {
        return Err(Error::NoData);
    }
    let mut rdr = reader(text);
    check_header(&mut rdr, &SUMMARY_HEADER)?;
    let mut rows = Vec::new();
    let mut ids = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = record_line(&rec);
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: `{}` is not a number", SUMMARY_HEADER[i], &rec[i]),
            })
        };
        let count = |i: usize| -> Result<usize> {
            rec[i].parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: `{}` is not a count", SUMMARY_HEADER[i], &rec[i]),
            })
        };
        let design = Design::parse(&rec[8])
            .ok_or_else(|| Error::Parse { line, message: format!("unknown design `{}`", &rec[8]) })?;
        let corr = if rec[7].is_empty() { None } else { Some(num(7)?) };
        let row = SummaryRow {
            experiment_id: rec[0].to_string(),
            n_control: count(1)?,
            n_treatment: count(2)?,
            mean_control: num(3)?,
            sd_control: num(4)?,
            mean_treatment: num(5)?,
            sd_treatment: num(6)?,
            corr,
            design,
        };
        row.validate().map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if !ids.insert(row.experiment_id.clone()) {
            return Err(Error::Parse { line, message: format!("experiment `{}` listed twice", row.experiment_id) });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::NoData);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectType {
    Professional,
    Student,
}

impl SubjectType {
    pub fn as_str(self) -> &'static str {
        match self {
            SubjectType::Professional => "professional",
            SubjectType::Student => "student",
        }
    }
}

/// Self-assessed experience covariates on the 1 (inexperienced) .. 4 (expert) scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Programming,
    Java,
    UnitTesting,
    Junit,
}

impl Covariate {
    pub const ALL: [Covariate; 4] = [Covariate::Programming, Covariate::Java, Covariate::UnitTesting, Covariate::Junit];

    pub fn name(self) -> &'static str {
        match self {
            Covariate::Programming => "programming",
            Covariate::Java => "java",
            Covariate::UnitTesting => "unit_testing",
            Covariate::Junit => "junit",
        }
    }

    pub fn from_name(s: &str) -> Option<Covariate> {
        Covariate::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateRow {
    pub experiment_id: String,
    pub participant_id: String,
    pub subject_type: SubjectType,
    pub programming: u8,
    pub java: u8,
    pub unit_testing: u8,
    pub junit: u8,
}

impl CovariateRow {
    pub fn value(&self, c: Covariate) -> u8 {
        match c {
            Covariate::Programming => self.programming,
            Covariate::Java => self.java,
            Covariate::UnitTesting => self.unit_testing,
            Covariate::Junit => self.junit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateTable {
    pub rows: Vec<CovariateRow>,
}

impl CovariateTable {
    pub fn get(&self, experiment_id: &str, participant_id: &str) -> Option<&CovariateRow> {
        self.rows.iter().find(|r| r.experiment_id == experiment_id && r.participant_id == participant_id)
    }

    /// Experiment ids in first-appearance order.
    pub fn experiment_ids(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.experiment_id.as_str()) {
                out.push(&r.experiment_id);
            }
        }
        out
    }

    /// Subject type per experiment, when it is constant within the experiment.
    pub fn subject_type_by_experiment(&self) -> Result<BTreeMap<String, SubjectType>> {
        let mut out: BTreeMap<String, SubjectType> = BTreeMap::new();
        for r in &self.rows {
            match out.get(&r.experiment_id) {
                Some(t) if *t != r.subject_type => {
                    return Err(Error::Validation(format!(
                        "experiment `{}` mixes subject types",
                        r.experiment_id
                    )))
                }
                _ => {
                    out.insert(r.experiment_id.clone(), r.subject_type);
                }
            }
        }
        Ok(out)
    }
}

pub fn load_covariates(path: impl AsRef<Path>, data: &ReplicationSet) -> Result<CovariateTable> {
    parse_covariates_csv(&read_file(path.as_ref())?, data)
}

pub fn parse_covariates_csv(text: &str, data: &ReplicationSet) -> Result<CovariateTable> {
    if text.trim().is_empty() {
        return Err(Error::NoData);
    }
    let mut rdr = reader(text);
    check_header(&mut rdr, &COVARIATE_HEADER)?;
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = record_line(&rec);
        let subject_type = match rec[2].to_ascii_lowercase().as_str() {
            "professional" => SubjectType::Professional,
            "student" => SubjectType::Student,
            other => return Err(Error::Parse { line, message: format!("unknown subject type `{other}`") }),
        };
        let ordinal = |i: usize| -> Result<u8> {
            let v: u8 = rec[i].parse().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: `{}` is not an integer", COVARIATE_HEADER[i], &rec[i]),
            })?;
            if (1..=4).contains(&v) {
                Ok(v)
            } else {
                Err(Error::Parse {
                    line,
                    message: format!("column `{}`: value {v} outside 1..4", COVARIATE_HEADER[i]),
                })
            }
        };
        let row = CovariateRow {
            experiment_id: rec[0].to_string(),
            participant_id: rec[1].to_string(),
            subject_type,
            programming: ordinal(3)?,
            java: ordinal(4)?,
            unit_testing: ordinal(5)?,
            junit: ordinal(6)?,
        };
        if !data.contains_participant(&row.experiment_id, &row.participant_id) {
            return Err(Error::OrphanParticipant {
                experiment: row.experiment_id,
                participant: row.participant_id,
            });
        }
        if !seen.insert((row.experiment_id.clone(), row.participant_id.clone())) {
            return Err(Error::Parse {
                line,
                message: format!("participant `{}` of `{}` listed twice", row.participant_id, row.experiment_id),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::NoData);
    }
    Ok(CovariateTable { rows })
}

/// Within-participant differences (treatment − control) over complete pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedSample {
    pub experiment_id: String,
    /// Sorted by participant id.
    pub participant_ids: Vec<String>,
    pub control: Vec<f64>,
    pub treatment: Vec<f64>,
    pub differences: Vec<f64>,
    pub n_pairs: usize,
}

impl PairedSample {
    pub fn from_pairs(experiment_id: impl Into<String>, pairs: Vec<(String, f64, f64)>) -> Result<Self> {
        let experiment_id = experiment_id.into();
        if pairs.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "`{experiment_id}` has {} complete pair(s); at least 2 are needed",
                pairs.len()
            )));
        }
        let n_pairs = pairs.len();
        let mut participant_ids = Vec::with_capacity(n_pairs);
        let mut control = Vec::with_capacity(n_pairs);
        let mut treatment = Vec::with_capacity(n_pairs);
        for (id, c, t) in pairs {
            participant_ids.push(id);
            control.push(c);
            treatment.push(t);
        }
        let differences = treatment.iter().zip(&control).map(|(t, c)| t - c).collect();
        Ok(Self { experiment_id, participant_ids, control, treatment, differences, n_pairs })
    }
}

/// Participants observed under both arms, ordered by participant id.
pub fn complete_pairs(replication: &Replication) -> Result<PairedSample> {
    if replication.design != Design::Within {
        return Err(Error::Validation(format!(
            "`{}` is a between-subjects replication; complete pairs need a within-subjects design",
            replication.experiment_id
        )));
    }
    let mut by_participant: BTreeMap<&str, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for o in &replication.observations {
        let slot = by_participant.entry(&o.participant_id).or_default();
        match o.arm {
            Arm::Control => slot.0 = o.outcome,
            Arm::Treatment => slot.1 = o.outcome,
        }
    }
    let pairs = by_participant
        .into_iter()
        .filter_map(|(id, (c, t))| Some((id.to_string(), c?, t?)))
        .collect();
    PairedSample::from_pairs(replication.experiment_id.clone(), pairs)
}
