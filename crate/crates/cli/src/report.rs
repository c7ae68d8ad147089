//! Markdown report. Built only from the step outputs, the resolved config and the
//! input digests, so re-running on the same inputs gives the same bytes.

use std::fmt::Write as _;

use anyhow::Result;

use crate::config::AnalysisConfig;
use crate::steps::{self, Inputs, StepOutput};

pub const GUIDELINE_6_TEXT: &str = "Guideline 6: these moderator analyses are exploratory and kept apart from \
the main analysis. They do not establish cause-effect relationships, because participant characteristics \
were measured rather than randomly assigned. Several moderators were examined, so some apparent effects \
may be chance findings (multiplicity). Moderators can be confounded with other differences between \
experiments or participants.";

pub const TOOL_VERSION: &str = concat!("repmeta-cli ", env!("CARGO_PKG_VERSION"));

/// All step outputs of one run.
pub struct Results {
    pub describe: StepOutput,
    pub individual: StepOutput,
    pub aggregate: StepOutput,
    pub moderators: StepOutput,
    pub simulate: StepOutput,
}

impl Results {
    pub fn run(c: &AnalysisConfig, inp: &Inputs) -> Result<Self> {
        Ok(Self {
            describe: steps::describe(c, inp)?,
            individual: steps::individual(c, inp)?,
            aggregate: steps::aggregate(c, inp)?,
            moderators: steps::moderators(c, inp)?,
            simulate: steps::simulate(c)?,
        })
    }

    pub fn all(&self) -> [&StepOutput; 5] {
        [&self.describe, &self.individual, &self.aggregate, &self.moderators, &self.simulate]
    }
}

fn section(s: &mut String, out: &StepOutput) {
    for t in &out.text {
        let _ = writeln!(s, "{t}\n");
    }
    for n in &out.notes {
        let _ = writeln!(s, "> {n}\n");
    }
    for t in &out.tables {
        let _ = writeln!(s, "### {}\n\nSource: `{}`\n\n{}", t.title, t.file_name(), t.to_markdown());
    }
    for f in &out.figures {
        let _ = writeln!(s, "![{}]({})\n", f.caption, f.file);
    }
}

pub fn build_report(c: &AnalysisConfig, inp: &Inputs, r: &Results) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "# Analysis of a group of replications: {}\n", c.outcome_name);
    let _ = writeln!(
        s,
        "Treatment `{}` is compared with control `{}`. Main analyses use alpha = {}; moderator analyses use alpha = {}.\n",
        c.levels.treatment, c.levels.control, c.alpha, c.alpha_moderator
    );
    for n in &c.notes {
        let _ = writeln!(s, "> {n}\n");
    }

    s.push_str("## Step 1: Describe participants and data\n\n");
    section(&mut s, &r.describe);
    s.push_str("## Step 2: Individual analyses\n\n");
    section(&mut s, &r.individual);
    s.push_str("## Step 3: Aggregate the results (confirmatory)\n\n");
    section(&mut s, &r.aggregate);
    s.push_str("## Step 4: Moderators (exploratory)\n\n");
    let _ = writeln!(s, "> {GUIDELINE_6_TEXT}\n");
    section(&mut s, &r.moderators);
    s.push_str("## Appendix: imbalance simulation\n\n");
    section(&mut s, &r.simulate);

    s.push_str("## Provenance\n\n| input | sha256 |\n|---|---|\n");
    for (name, hash) in &inp.hashes {
        let _ = writeln!(s, "| {name} | {hash} |");
    }
    let _ = writeln!(s, "\nGenerated by {TOOL_VERSION}. Configuration:\n\n```toml\n{}```", c.echo()?);
    Ok(s)
}
