//! `holonomy-lab`: command line harness over the holonomy laboratory.
//!
//! Exit codes: 0 for a completed run (including negative verdicts such as
//! a refuted cone certificate), 1 for numerical failures or failed
//! verification checks, 2 for configuration problems.

mod config;
mod runner;
mod verify;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use config::{CliError, CliResult, Overrides};

#[derive(Parser)]
#[command(
    name = "holonomy-lab",
    version,
    about = "Numerical laboratory for the affine holonomy of metric charts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the shipped chart catalog.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Develop one configured loop and emit its affine holonomy element.
    Holonomy(RunArgs),
    /// Sample seeded loops and classify the local affine holonomy.
    Classify(RunArgs),
    /// Certify or refute local cone structure around the base point.
    ConeCheck(RunArgs),
    /// Emit the development trace of the configured curve as CSV.
    Develop(RunArgs),
    /// Run the named verification checks over the catalog.
    Verify(VerifyArgs),
}

#[derive(Subcommand)]
enum CatalogAction {
    /// Print every catalog entry with its dimension and base point.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// Path to a JSON run configuration.
    config: PathBuf,
    /// Override the sampling seed (creates a default protocol if absent).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the RK4 integration step.
    #[arg(long)]
    step: Option<f64>,
    /// JSON file of tolerance overrides; replaces the config's block.
    #[arg(long)]
    tol_file: Option<PathBuf>,
    /// Write the report here (atomically) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit the timestamp/version block for byte-reproducible output.
    #[arg(long)]
    no_meta: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Path to a JSON run configuration; only checks targeting its
    /// manifold run, the rest are reported as SKIP.
    config: Option<PathBuf>,
    /// Run every check.
    #[arg(long, conflicts_with = "config")]
    all: bool,
    /// Print the check ledger and exit.
    #[arg(long)]
    list: bool,
    /// Seed for all sampled loop families (default 42).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the RK4 integration step.
    #[arg(long)]
    step: Option<f64>,
    /// JSON file of tolerance overrides.
    #[arg(long)]
    tol_file: Option<PathBuf>,
    /// Write the suite report here (atomically) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit the timestamp/version block for byte-reproducible output.
    #[arg(long)]
    no_meta: bool,
}

impl RunArgs {
    fn overrides(&self) -> Overrides<'_> {
        Overrides {
            seed: self.seed,
            step: self.step,
            tol_file: self.tol_file.as_deref(),
        }
    }

    fn resolve(&self) -> CliResult<config::Resolved> {
        config::resolve(config::load_config(&self.config)?, self.overrides())
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}

fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Catalog {
            action: CatalogAction::List,
        } => {
            runner::emit_text(&runner::catalog_list(), None)?;
            Ok(0)
        }
        Command::Holonomy(args) => {
            runner::run_holonomy(&args.resolve()?, args.out.as_deref(), args.no_meta)?;
            Ok(0)
        }
        Command::Classify(args) => {
            runner::run_classify(&args.resolve()?, args.out.as_deref(), args.no_meta)?;
            Ok(0)
        }
        Command::ConeCheck(args) => {
            runner::run_cone_check(&args.resolve()?, args.out.as_deref(), args.no_meta)?;
            Ok(0)
        }
        Command::Develop(args) => {
            runner::run_develop(&args.resolve()?, args.out.as_deref())?;
            Ok(0)
        }
        Command::Verify(args) => run_verify(args),
    }
}

fn run_verify(args: VerifyArgs) -> CliResult<i32> {
    if args.list {
        runner::emit_text(&verify::ledger(), None)?;
        return Ok(0);
    }
    if !args.all && args.config.is_none() {
        return Err(CliError::Config(
            "verify needs a configuration path, --all, or --list".into(),
        ));
    }

    // A config narrows the suite to its manifold and may override the
    // tolerances; the numerical knobs themselves come from flags.
    let (selection, tol) = match &args.config {
        Some(path) => {
            let over = Overrides {
                seed: args.seed,
                step: args.step,
                tol_file: args.tol_file.as_deref(),
            };
            let resolved = config::resolve(config::load_config(path)?, over)?;
            (Some(resolved.name.clone()), resolved.tol)
        }
        None => {
            let mut tol = match args.tol_file.as_deref() {
                Some(path) => config::load_tolerances(path)?,
                None => runner::default_tolerances(),
            };
            if let Some(step) = args.step {
                if !(step.is_finite() && step > 0.0) {
                    return Err(CliError::Config(format!(
                        "step must be finite and positive, got {step}"
                    )));
                }
                tol.rk4_step = step;
            }
            (None, tol)
        }
    };
    let seed = args.seed.unwrap_or(42);
    let step = tol.rk4_step;
    let ctx = verify::SuiteCtx::new(seed, step, tol.clone());

    let (results, any_fail) = verify::run_suite(&ctx, selection.as_deref());
    let counts = |status: &str| results.iter().filter(|r| r.status == status).count();
    let mut body = Map::new();
    body.insert("command".into(), Value::from("verify"));
    body.insert(
        "selection".into(),
        Value::from(selection.as_deref().unwrap_or("all")),
    );
    body.insert("seed".into(), Value::from(seed));
    body.insert(
        "step".into(),
        serde_json::to_value(step).expect("finite float"),
    );
    body.insert(
        "counts".into(),
        serde_json::json!({
            "pass": counts("PASS"),
            "fail": counts("FAIL"),
            "skip": counts("SKIP"),
        }),
    );
    body.insert(
        "checks".into(),
        serde_json::to_value(&results)
            .map_err(|e| CliError::Numerical(format!("cannot serialize report: {e}")))?,
    );
    body.insert(
        "tolerances".into(),
        serde_json::to_value(&tol)
            .map_err(|e| CliError::Numerical(format!("cannot serialize report: {e}")))?,
    );
    runner::emit_json(body, args.out.as_deref(), args.no_meta)?;
    Ok(if any_fail { 1 } else { 0 })
}
