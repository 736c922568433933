//! `susmap` — landslide-susceptibility modeling pipeline.
//!
//! Every verb reads the same TOML configuration and writes into a run
//! directory derived from it; later verbs build any missing prerequisites
//! of earlier ones, so `susmap run` and a sequence of individual verbs
//! produce the same bundle.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use susmap_cli::config::{load_config, validate};
use susmap_cli::pipeline::{execute, Overrides, RunContext, Stage};

#[derive(Parser)]
#[command(name = "susmap", version, about = "Landslide susceptibility modeling pipeline")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Check a configuration file and report every problem found.
    Validate(CommonArgs),
    /// Write multicollinearity (VIF) and significance (OLS) screens.
    Diagnose(CommonArgs),
    /// Train every requested (model, factor set) cell.
    Train(CommonArgs),
    /// Score the held-out split and write the metrics table.
    Evaluate(CommonArgs),
    /// Attribute test predictions to factors and compare the rankings.
    Explain(CommonArgs),
    /// Score factor grids into susceptibility and class maps.
    Map(CommonArgs),
    /// Full pipeline: diagnose, train, evaluate, explain, map.
    Run(CommonArgs),
}

impl Verb {
    fn args(&self) -> &CommonArgs {
        match self {
            Verb::Validate(a)
            | Verb::Diagnose(a)
            | Verb::Train(a)
            | Verb::Evaluate(a)
            | Verb::Explain(a)
            | Verb::Map(a)
            | Verb::Run(a) => a,
        }
    }

    fn stage(&self) -> Option<Stage> {
        match self {
            Verb::Validate(_) => None,
            Verb::Diagnose(_) => Some(Stage::Diagnose),
            Verb::Train(_) => Some(Stage::Train),
            Verb::Evaluate(_) => Some(Stage::Evaluate),
            Verb::Explain(_) => Some(Stage::Explain),
            Verb::Map(_) => Some(Stage::Map),
            Verb::Run(_) => Some(Stage::Run),
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output root directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Restrict the run to one configured factor set.
    #[arg(long, value_name = "NAME")]
    factor_set: Option<String>,
    /// Restrict the run to one configured model.
    #[arg(long, value_name = "NAME")]
    model: Option<String>,
    /// Restrict explanation to one configured method.
    #[arg(long, value_name = "NAME")]
    method: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match try_main(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn try_main(cli: &Cli) -> anyhow::Result<ExitCode> {
    let args = cli.verb.args();
    let config = load_config(&args.config)?;

    let Some(stage) = cli.verb.stage() else {
        let problems = validate(&config);
        if problems.is_empty() {
            println!("config OK");
            return Ok(ExitCode::SUCCESS);
        }
        for problem in &problems {
            println!("problem: {problem}");
        }
        println!("{} problem(s) found", problems.len());
        return Ok(ExitCode::FAILURE);
    };

    let problems = validate(&config);
    if !problems.is_empty() {
        for problem in &problems {
            eprintln!("problem: {problem}");
        }
        anyhow::bail!(
            "configuration {} has {} problem(s); see above",
            args.config.display(),
            problems.len()
        );
    }

    let overrides = Overrides {
        seed: args.seed,
        out: args.out.clone(),
        factor_set: args.factor_set.clone(),
        model: args.model.clone(),
        method: args.method.clone(),
    };
    let ctx = RunContext::new(config, &overrides)?;
    execute(&ctx, stage)?;
    println!("{} complete: {}", stage.name(), ctx.run_dir.display());
    Ok(ExitCode::SUCCESS)
}
