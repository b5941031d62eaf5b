//! `rydsim`: ensemble simulations and oracle checks from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rydberg_core::runner::{emit_results, run_ensemble, to_json, validate_against_oracle, ConfigBuilder};
use rydberg_core::Error;

#[derive(Parser)]
#[command(name = "rydsim", version, about = "Many-body Rabi oscillations of Rydberg superatoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble of random samples over a pulse-area scan.
    Simulate(Simulate),
    /// Compare the superatom model with the exact solver on one sample.
    Validate(Validate),
}

#[derive(Args)]
struct Sources {
    /// TOML file of configuration keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter preset (1a 1b 2a 2b 3a 3b 4 5), applied before the file.
    #[arg(long)]
    figure: Option<String>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Sources {
    fn builder(&self) -> Result<ConfigBuilder, Error> {
        let mut b = ConfigBuilder::new();
        if let Some(f) = &self.figure {
            b = b.preset(f)?;
        }
        if let Some(p) = &self.config {
            b = b.file(p)?;
        }
        for s in &self.set {
            b = b.override_str(s)?;
        }
        if let Some(seed) = self.seed {
            b = b.set("seed", toml_int(seed)?);
        }
        Ok(b)
    }
}

#[derive(Args)]
struct Simulate {
    #[command(flatten)]
    sources: Sources,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Validate {
    /// Compare against the exact 2^N solver (the only check available).
    #[arg(long, required = true)]
    against_oracle: bool,
    /// Atom number, at most 14.
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    sources: Sources,
    /// Superatom count; every atom is its own unit when omitted.
    #[arg(long)]
    superatoms: Option<usize>,
    #[arg(long)]
    max_excited: Option<usize>,
    /// Fail when the largest deviation exceeds this.
    #[arg(long)]
    tolerance: Option<f64>,
}

fn toml_int(x: impl TryInto<i64>) -> Result<toml::Value, Error> {
    x.try_into().map(toml::Value::Integer).map_err(|_| Error::Config("integer out of range".into()))
}

fn simulate(args: &Simulate) -> Result<(), Error> {
    let mut b = args.sources.builder()?;
    if let Some(w) = args.workers {
        b = b.set("workers", toml_int(w)?);
    }
    if let Some(o) = &args.out {
        b = b.set("output_dir", toml::Value::String(o.display().to_string()));
    }
    let cfg = b.build()?;
    let result = run_ensemble(&cfg)?;
    let paths = emit_results(&result, cfg.output_dir.as_ref())?;
    let report = serde_json::json!({
        "files": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "completed": result.completed,
        "failed": result.failed.len(),
        "fit": result.fit,
    });
    print!("{}", to_json(&report)?);
    Ok(())
}

fn validate(args: &Validate) -> Result<bool, Error> {
    // Oracle defaults: a pulse of area 2π sampled at 40 times.
    let mut b = ConfigBuilder::new()
        .toml_str("density_cm3 = 1e11\nscaled_strength = 1.0\narea_stop = 6.283185307179586\narea_points = 40\nmax_excited = 14\n")?;
    let user = args.sources.builder()?;
    b = b.merge(user);
    b = b.set("n_atoms", toml_int(args.n)?);
    if let Some(m) = args.superatoms {
        b = b.set("superatoms", toml_int(m)?);
    }
    if let Some(m) = args.max_excited {
        b = b.set("max_excited", toml_int(m)?);
    }
    let cfg = b.build()?;
    let check = validate_against_oracle(&cfg)?;
    let worst = check.deviation.max();
    let pass = args.tolerance.is_none_or(|t| worst <= t);
    let report = serde_json::json!({
        "check": check,
        "max_deviation": worst,
        "tolerance": args.tolerance,
        "pass": pass,
    });
    print!("{}", to_json(&report)?);
    Ok(pass)
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidArgument(_) => "invalid_argument",
        Error::CoincidentAtoms { .. } => "coincident_atoms",
        Error::OverlappingGroups(_) => "overlapping_groups",
        Error::BasisTooLarge { .. } => "basis_too_large",
        Error::StepUnderflow { .. } | Error::StepLimit { .. } => "propagation",
        Error::OracleTooLarge { .. } => "oracle_too_large",
        Error::TooManyFailures { .. } => "too_many_failures",
        Error::Config(_) => "config",
        Error::Io { .. } => "io",
        Error::Json(_) => "json",
    }
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end().to_string()),
    };
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Validate(a) => validate(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}", serde_json::json!({ "error": "tolerance_exceeded", "message": "deviation above tolerance" }));
            ExitCode::from(1)
        }
        Err(e) => fail(error_kind(&e), e.to_string()),
    }
}
