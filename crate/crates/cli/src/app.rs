//! Argument parsing, dispatch, artifact writing and exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use csl_core::sweeplab::{CheckResult, SweepReport};

use crate::artifacts::{file_names, loglog_svg, write_json, ErrorRecord, Manifest};
use crate::commands;
use crate::config::{parse_config, ConfigError, RunConfig, MEMORY_CAP_ENV};

/// All checks passed.
pub const EXIT_OK: i32 = 0;
/// The command ran but at least one check failed.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Configuration, precondition or numerical error; see `error.json`.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "csl", version, about = "Numerical laboratory for the worst-decay-cone counterexample")]
pub struct Cli {
    /// TOML configuration; defaults apply to absent keys.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides [output] dir).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (overrides [experiment] jobs).
    #[arg(long, global = true, value_name = "K")]
    pub jobs: Option<usize>,
    /// Drop every λ above this value.
    #[arg(long = "lambda-max", global = true, value_name = "LAMBDA")]
    pub lambda_max: Option<f64>,
    /// Treat configuration warnings as failures.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Residual, closed-form and homogeneity tables for the cone chart.
    ConeVerify,
    /// Decay, deficit and derivative tables for the multiplier.
    MultiplierVerify,
    /// Build f for every λ; write snapshots and a norm table.
    Synthesize,
    /// Full λ-sweep with slope fits and diagnostics.
    Sweep,
    /// Summarize a finished sweep directory with pass/fail per check.
    Report {
        /// Directory holding report.json (defaults to --out).
        run_dir: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ConeVerify => "cone-verify",
            Command::MultiplierVerify => "multiplier-verify",
            Command::Synthesize => "synthesize",
            Command::Sweep => "sweep",
            Command::Report { .. } => "report",
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] csl_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Input(String),
}

impl Failure {
    fn kind(&self) -> &str {
        match self {
            Failure::Config(_) => "configuration",
            Failure::Core(e) => e.kind(),
            Failure::Io(_) => "io",
            Failure::Input(_) => "input",
        }
    }

    fn details(&self) -> Vec<String> {
        match self {
            Failure::Config(e) => e.violations.clone(),
            _ => Vec::new(),
        }
    }
}

struct Run {
    artifacts: Vec<PathBuf>,
    checks: Vec<CheckResult>,
    stdout: String,
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    let env = std::env::var(MEMORY_CAP_ENV).ok();
    cfg.apply_overrides(cli.jobs, cli.lambda_max, cli.out.clone(), env.as_deref())?;
    if cli.strict && !cfg.warnings.is_empty() {
        return Err(ConfigError { violations: cfg.warnings.iter().map(|w| format!("warning (strict): {w}")).collect() }.into());
    }
    Ok(cfg)
}

fn write_table(dir: &Path, name: &str, table: &crate::artifacts::CsvTable, out: &mut Vec<PathBuf>) -> Result<(), Failure> {
    let path = dir.join(name);
    table.write(&path)?;
    out.push(path);
    Ok(())
}

fn execute(cli: &Cli, cfg: &RunConfig) -> Result<Run, Failure> {
    let dir = cfg.out_dir.as_path();
    fs::create_dir_all(dir)?;
    let mut artifacts = Vec::new();
    let mut stdout = String::new();
    let checks = match &cli.command {
        Command::ConeVerify => {
            let v = commands::cone_verify(cfg)?;
            write_table(dir, "cone.csv", &v.cone, &mut artifacts)?;
            write_table(dir, "homogeneity.csv", &v.homogeneity, &mut artifacts)?;
            stdout.push_str(&v.cone.render());
            stdout.push('\n');
            stdout.push_str(&v.homogeneity.render());
            v.checks
        }
        Command::MultiplierVerify => {
            let v = commands::multiplier_verify(cfg)?;
            write_table(dir, "multiplier.csv", &v.decay, &mut artifacts)?;
            write_table(dir, "derivatives.csv", &v.derivative_table, &mut artifacts)?;
            stdout.push_str(&v.decay.render());
            v.checks
        }
        Command::Synthesize => {
            cfg.check_memory()?;
            let s = commands::synthesize(cfg, cfg.snapshot.then_some(dir))?;
            write_table(dir, "norms.csv", &s.norms, &mut artifacts)?;
            artifacts.extend(s.snapshots);
            stdout.push_str(&s.norms.render());
            s.checks
        }
        Command::Sweep => {
            cfg.check_memory()?;
            let report = commands::run_sweep(cfg)?;
            let checks = commands::sweep_checks(&report);
            let path = dir.join("report.json");
            write_json(&path, &report)?;
            artifacts.push(path);
            write_table(dir, "sweep.csv", &commands::sweep_table(&report), &mut artifacts)?;
            write_table(dir, "slopes.csv", &commands::slopes_table(&report), &mut artifacts)?;
            write_table(dir, "checks.csv", &commands::checks_table(&checks), &mut artifacts)?;
            if cfg.svg {
                let path = dir.join("loglog.svg");
                fs::write(&path, loglog_svg(&report))?;
                artifacts.push(path);
            }
            stdout.push_str(&commands::render_summary(&report, &checks));
            checks
        }
        Command::Report { run_dir } => {
            let src = run_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
            let path = src.join("report.json");
            let text = fs::read_to_string(&path)
                .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
            let report: SweepReport = serde_json::from_str(&text)
                .map_err(|e| Failure::Input(format!("{} is not a sweep report: {e}", path.display())))?;
            let checks = commands::sweep_checks(&report);
            let summary = commands::render_summary(&report, &checks);
            let out = dir.join("summary.txt");
            fs::write(&out, &summary)?;
            artifacts.push(out);
            stdout.push_str(&summary);
            checks
        }
    };
    if !matches!(cli.command, Command::Sweep | Command::Report { .. }) {
        for c in &checks {
            stdout.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
        }
    }
    Ok(Run { artifacts, checks, stdout })
}

fn write_manifest(cli: &Cli, cfg: &RunConfig, artifacts: &[PathBuf]) -> std::io::Result<PathBuf> {
    let path = cfg.out_dir.join(format!("manifest-{}.json", cli.command.name()));
    let manifest = Manifest {
        tool: "csl",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        config_path: cli.config.as_deref(),
        jobs: cfg.jobs,
        lambda_max: cli.lambda_max,
        strict: cli.strict,
        config: cfg,
        artifacts: file_names(artifacts),
    };
    write_json(&path, &manifest)?;
    Ok(path)
}

fn record_error(cli: &Cli, dir: &Path, failure: &Failure) {
    let record = ErrorRecord {
        command: cli.command.name(),
        kind: failure.kind(),
        message: failure.to_string(),
        details: failure.details(),
    };
    if fs::create_dir_all(dir).is_ok() {
        if let Err(e) = write_json(&dir.join("error.json"), &record) {
            eprintln!("could not write error record: {e}");
        }
    }
}

/// Runs one command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let fallback_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let cfg = match load_config(cli) {
        Ok(c) => c,
        Err(f) => {
            eprintln!("{f}");
            record_error(cli, &fallback_dir, &f);
            return EXIT_ERROR;
        }
    };
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    match execute(cli, &cfg) {
        Ok(run) => {
            print!("{}", run.stdout);
            if let Err(e) = write_manifest(cli, &cfg, &run.artifacts) {
                eprintln!("could not write manifest: {e}");
                return EXIT_ERROR;
            }
            if run.checks.iter().all(|c| c.passed) {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(f) => {
            eprintln!("{f}");
            record_error(cli, &cfg.out_dir, &f);
            let _ = write_manifest(cli, &cfg, &[]);
            EXIT_ERROR
        }
    }
}
