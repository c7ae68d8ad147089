use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use repmeta::lmm::DfRule;
use repmeta_cli::config::{AnalysisConfig, Overrides, OUT_ENV};
use repmeta_cli::report::{build_report, Results};
use repmeta_cli::steps::{self, Inputs, StepOutput};
use repmeta_cli::{exit_code, output};

#[derive(Parser)]
#[command(name = "repmeta", version, about = "Analyze a group of experiment replications")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Step 1: descriptive statistics and profile/box plots
    Describe,
    /// Step 2: one test per replication (p-value pooling shown for comparison)
    Individual,
    /// Step 3: AD meta-analysis and IPD models
    Aggregate,
    /// Step 4: subgroup analysis and moderator mixed models
    Moderators,
    /// Monte-Carlo comparison of IPD-MT and IPD-S under arm imbalance
    Simulate,
    /// All steps plus the markdown report
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum DfRuleArg {
    #[value(name = "experiments-minus-1")]
    ExperimentsMinusOne,
    Z,
    WithinParticipant,
}

#[derive(Args)]
struct Flags {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides REPMETA_OUT and the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Participant-level CSV
    #[arg(long, global = true)]
    raw: Option<PathBuf>,
    /// Per-experiment summary CSV
    #[arg(long, global = true)]
    summary: Option<PathBuf>,
    /// Participant experience CSV
    #[arg(long, global = true)]
    covariates: Option<PathBuf>,
    /// Significance level
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Significance level for subgroup and moderator analyses
    #[arg(long, global = true)]
    alpha_moderator: Option<f64>,
    /// Apply the small-sample correction to effect sizes
    #[arg(long, global = true)]
    hedges: bool,
    /// Degrees of freedom for mixed-model fixed effects
    #[arg(long, global = true, value_enum)]
    df_rule: Option<DfRuleArg>,
    /// Simulation seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulation iterations
    #[arg(long, global = true)]
    iterations: Option<usize>,
}

fn write(c: &AnalysisConfig, out: &StepOutput) -> Result<()> {
    for p in out.files()?.write_all(&c.out)? {
        println!("wrote {}", p.display());
    }
    for n in &out.notes {
        eprintln!("note: {n}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let f = cli.flags;
    let overrides = Overrides {
        out: f.out,
        alpha: f.alpha,
        alpha_moderator: f.alpha_moderator,
        hedges: f.hedges,
        df_rule: f.df_rule.map(|d| match d {
            DfRuleArg::ExperimentsMinusOne => DfRule::ExperimentsMinusOne,
            DfRuleArg::Z => DfRule::Z,
            DfRuleArg::WithinParticipant => DfRule::WithinParticipant,
        }),
        seed: f.seed,
        iterations: f.iterations,
        raw: f.raw,
        summary: f.summary,
        covariates: f.covariates,
    };
    let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let c = AnalysisConfig::resolve(f.config.as_deref(), env_out, &overrides)?;
    if let Command::Simulate = cli.command {
        return write(&c, &steps::simulate(&c)?);
    }
    let inp = Inputs::load(&c)?;
    match cli.command {
        Command::Describe => write(&c, &steps::describe(&c, &inp)?),
        Command::Individual => write(&c, &steps::individual(&c, &inp)?),
        Command::Aggregate => write(&c, &steps::aggregate(&c, &inp)?),
        Command::Moderators => write(&c, &steps::moderators(&c, &inp)?),
        Command::Simulate => unreachable!(),
        Command::Report => {
            let results = Results::run(&c, &inp)?;
            for out in results.all() {
                out.files()?.write_all(&c.out)?;
            }
            let path = c.out.join("report.md");
            output::write_atomic(&path, build_report(&c, &inp, &results)?.as_bytes())?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
