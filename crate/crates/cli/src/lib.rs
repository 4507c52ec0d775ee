//! Command-line front end: JSON configs in, CSV and JSON reports out.

pub mod config;
pub mod f16;
pub mod report;

use std::path::{Path, PathBuf};

use bode_limits_core::lti::log_grid;
use bode_limits_core::spectra::{comp_sensitivity_like, sensitivity_like};
use bode_limits_core::stochastic::simulate_closed_loop;
use bode_limits_core::verify::{
    check_corollary2, check_theorem1, check_theorem3, EmpiricalSetup, TheoremReport, Verdict,
};
use bode_limits_core::BodeError;
use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::AnalysisConfig;
use crate::report::{write_curves, write_reports, write_summary, Summary};

#[derive(Debug, Parser)]
#[command(
    name = "bode-limits",
    version,
    about = "Bode integrals of feedback loops, closed form and from simulated signals"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON analysis configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `outputs` in the config; default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Simulation seed (overrides `sim.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Emit theorem reports as one CSV instead of JSON documents.
    #[arg(long, global = true)]
    pub csv: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pole/zero report, Bode integrals, closed forms, bounds and |S|, |T| curves.
    Analyze,
    /// One seeded simulation: signals and sensitivity-like curves.
    Simulate,
    /// Empirical and analytic theorem checks.
    Verify {
        #[arg(long, value_enum, default_value_t = Which::All)]
        which: Which,
    },
    /// Built-in F-16 flight-path case study.
    F16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Theorem1,
    Corollary2,
    Theorem3,
    All,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(#[from] BodeError),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Precondition(BodeError::Io(_)) => 1,
            CliError::Precondition(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<AnalysisConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path.json> is required".into()))?;
    let mut cfg = AnalysisConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&AnalysisConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.outputs.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs a parsed command; on success returns the text for stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::F16 => f16::run(&out_dir(cli, None), cli.seed.unwrap_or(0), cli.csv),
        command => {
            // configuration is fully parsed before anything is written
            let cfg = load_config(cli)?;
            let out = out_dir(cli, Some(&cfg));
            match command {
                Command::Analyze => cmd_analyze(&cfg, &out),
                Command::Simulate => cmd_simulate(&cfg, &out),
                Command::Verify { which } => cmd_verify(&cfg, *which, &out, cli.csv),
                Command::F16 => unreachable!(),
            }
        }
    }
}

pub fn cmd_analyze(cfg: &AnalysisConfig, out: &Path) -> Result<String, CliError> {
    let l = cfg.open_loop()?;
    let summary = Summary::compute("L", &l, &cfg.quad)?;
    let grid = log_grid(cfg.grid.lo, cfg.grid.hi, cfg.grid.points);
    let pz = report::pole_zero_json(&l)?;

    std::fs::create_dir_all(out)?;
    write_summary(out, std::slice::from_ref(&summary))?;
    write_curves(
        &out.join("curves.csv"),
        &grid,
        &[("abs_s", &l, false), ("abs_t", &l, true)],
    )?;
    std::fs::write(out.join("pole_zero.json"), pz)?;
    Ok(report::summary_text(std::slice::from_ref(&summary)))
}

pub fn cmd_simulate(cfg: &AnalysisConfig, out: &Path) -> Result<String, CliError> {
    let l = cfg.open_loop()?;
    let shaping = cfg.shaping_filter()?;
    let welch = cfg.welch_config();
    let rec = simulate_closed_loop(&l, &shaping, &cfg.sim)?;
    let s_like = sensitivity_like(&rec, &welch)?;
    let t_like = comp_sensitivity_like(&rec, &welch)?;

    std::fs::create_dir_all(out)?;
    rec.write_csv(&out.join("signals.csv"))?;
    rec.write_meta(&out.join("signals.json"))?;
    s_like.write_csv(&out.join("s_like.csv"))?;
    t_like.write_csv(&out.join("t_like.csv"))?;
    let mut text = format!(
        "simulated {} samples at dt = {} s (seed {}, burn-in {:.3} s)\n",
        rec.len(),
        rec.dt,
        rec.seed,
        rec.meta.burn_in
    );
    for w in &rec.meta.warnings {
        text.push_str(&format!("warning: {w}\n"));
    }
    Ok(text)
}

pub fn cmd_verify(
    cfg: &AnalysisConfig,
    which: Which,
    out: &Path,
    csv: bool,
) -> Result<String, CliError> {
    let l = cfg.open_loop()?;
    let shaping = cfg.shaping_filter()?;
    let welch = cfg.welch_config();
    let setup = EmpiricalSetup {
        shaping: &shaping,
        sim: &cfg.sim,
        welch: &welch,
        quad: &cfg.quad,
        tol: cfg.tolerances,
    };
    let reports: Vec<TheoremReport> = match which {
        Which::Theorem1 => vec![check_theorem1(&l, &setup)?],
        Which::Corollary2 => vec![check_corollary2(&l, &setup)?],
        Which::Theorem3 => vec![check_theorem3(&l, &cfg.quad, cfg.tolerances)?],
        Which::All => {
            let [a, b, c] = bode_limits_core::verify::check_all(&l, &setup);
            vec![a?, b?, c?]
        }
    };
    std::fs::create_dir_all(out)?;
    write_reports(out, &reports, csv)?;
    finish_reports(&reports)
}

/// Renders reports and turns any failed verdict into exit code 4.
pub(crate) fn finish_reports(reports: &[TheoremReport]) -> Result<String, CliError> {
    let text = report::reports_text(reports);
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| r.verdict == Verdict::Fail)
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(text)
    } else {
        print!("{text}");
        Err(CliError::Verification(failed.join(", ")))
    }
}
