//! `geomag` command-line front end.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use commands::Ctx;
use config::ExperimentConfig;
use error::CliError;
use output::RunSummary;

#[derive(Parser)]
#[command(
    name = "geomag",
    version,
    about = "Scattering with geometric gauge potentials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` experiment file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV files and summary.json.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the `tolerance` key of the experiment.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// No random numbers are drawn anywhere; accepted for explicitness.
    #[arg(long, global = true)]
    seedless: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SlabMode {
    Bo,
    Coupled,
    Scan,
}

#[derive(Subcommand)]
enum Command {
    /// Slab gauge and scalar potentials, induction and flux.
    Potentials,
    /// Two-channel reflection for the one-dimensional model.
    Scatter1d,
    /// Normal-incidence slab scattering.
    Slab {
        #[arg(long, value_enum)]
        mode: SlabMode,
    },
    /// Contour flux functional in the two gauges.
    Flux,
    /// Diabatic current on an (x, y) grid.
    CurrentField,
    /// Wave-packet propagation through the slab.
    Tdse,
    /// Packets through a flux lens and their focal point.
    Lens,
    /// Analytic ferromagnetic slab.
    Ferroslab,
    /// Wilson line and loop convergence.
    Holonomy,
    /// Aharonov-Bohm and dipolar gauge checks.
    Internal,
    /// Runs the numbered acceptance checks.
    Accept,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Potentials => "potentials",
            Command::Scatter1d => "scatter1d",
            Command::Slab { .. } => "slab",
            Command::Flux => "flux",
            Command::CurrentField => "current-field",
            Command::Tdse => "tdse",
            Command::Lens => "lens",
            Command::Ferroslab => "ferroslab",
            Command::Holonomy => "holonomy",
            Command::Internal => "internal",
            Command::Accept => "accept",
        }
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let name = cli.command.name();
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if matches!(cli.command, Command::Accept) => ExperimentConfig::parse("", "<none>")?,
        None => return Err(CliError::Config(format!("`{name}` needs --config <path>"))),
    };
    if let Some(t) = cli.tolerance {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Config(format!(
                "--tolerance must be positive, got {t}"
            )));
        }
        cfg.set("tolerance", format!("{t:e}"));
    }
    std::fs::create_dir_all(&cli.out)?;
    let ctx = Ctx { out: &cli.out };
    let mut summary = RunSummary::new(name, &cfg.echo());
    let t0 = Instant::now();
    let c = &mut cfg;
    let s = &mut summary;
    match cli.command {
        Command::Potentials => commands::potentials(c, &ctx, s),
        Command::Scatter1d => commands::scatter1d(c, &ctx, s),
        Command::Slab { mode } => {
            let m = match mode {
                SlabMode::Bo => "bo",
                SlabMode::Coupled => "coupled",
                SlabMode::Scan => "scan",
            };
            commands::slab(c, &ctx, s, m)
        }
        Command::Flux => commands::flux(c, &ctx, s),
        Command::CurrentField => commands::current_field(c, &ctx, s),
        Command::Tdse => commands::tdse(c, &ctx, s),
        Command::Lens => commands::lens(c, &ctx, s),
        Command::Ferroslab => commands::ferroslab(c, &ctx, s),
        Command::Holonomy => commands::holonomy(c, &ctx, s),
        Command::Internal => commands::internal(c, &ctx, s),
        Command::Accept => commands::accept(c, &ctx, s),
    }?;
    let failed = summary.failures();
    let text = summary.finish(&cli.out, t0.elapsed().as_secs_f64())?;
    if failed.is_empty() {
        Ok(text)
    } else {
        println!("{text}");
        Err(CliError::Acceptance(failed.join(", ")))
    }
}

fn main() -> ExitCode {
    // usage errors are config errors here; clap would exit with 2
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("geomag: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
