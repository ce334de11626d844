//! `branchflow`: moment theory, Monte Carlo simulation, rays and comparison
//! reports for branched flow in weak random media.
//!
//! Settings come from built-in defaults, then a TOML file (`--config`), then
//! command-line flags, each overriding the previous.

mod commands;
mod config;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_COMPARISON: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "branchflow", version, about = "Scintillation of waves in weak random media")]
struct Cli {
    /// TOML configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Realization-count multiplier (default 0.2 for presets, 1 otherwise).
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scintillation and correlation curves from the moment equations.
    Theory,
    /// Monte Carlo simulation of the paraxial wave equation.
    Simulate {
        /// Re-run the plan stored in a manifest instead of the config.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Ray ensembles: diffusion moments and phase-space histograms.
    Rays,
    /// Compare a simulated curve with a theory curve.
    Compare {
        theory: PathBuf,
        simulation: PathBuf,
        /// Allowed deviation in combined standard errors.
        #[arg(long, default_value_t = 3.0)]
        sigma: f64,
    },
    /// Expand a named setup into configs; with --run also execute them.
    Preset {
        name: String,
        #[arg(long)]
        run: bool,
        #[arg(long, default_value_t = 3.0)]
        sigma: f64,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    commands::apply_scale(&mut cfg, cli.scale.unwrap_or(1.0))?;
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Theory => {
            let cfg = load_config(cli)?;
            for f in commands::theory(&cfg, &out_dir(cli))? {
                println!("{}", f.display());
            }
        }
        Command::Simulate { manifest } => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli);
            let plan = commands::simulate(&cfg, manifest.as_deref(), cli.workers, &out)?;
            println!("{} realizations written to {}", plan.n_medium, out.display());
        }
        Command::Rays => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli);
            commands::rays(&cfg, cli.workers, &out)?;
            println!("ray statistics written to {}", out.display());
        }
        Command::Compare { theory, simulation, sigma } => {
            let report = commands::compare(theory, simulation, *sigma)?;
            commands::print_report(&report);
            if let Some(out) = &cli.out {
                std::fs::create_dir_all(out)?;
                branchflow_core::io::write_json(&out.join("compare.json"), &report)?;
            }
            if !report.pass {
                return Ok(EXIT_COMPARISON);
            }
        }
        Command::Preset { name, run, sigma } => {
            let scale = cli.scale.unwrap_or(presets::DEFAULT_PRESET_SCALE);
            let configs = commands::preset(name, scale, cli.seed, cli.out.as_deref())?;
            if *run {
                if !commands::run_preset(&configs, cli.workers, *sigma, &out_dir(cli))? {
                    return Ok(EXIT_COMPARISON);
                }
            }
        }
    }
    Ok(0)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use branchflow_core::Error;
    match e.downcast_ref::<Error>() {
        Some(Error::NumericalFailure { .. } | Error::TooManyDrops { .. } | Error::InsufficientData(_)) => EXIT_NUMERICAL,
        _ => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors are validation errors; clap's own code 2 would read as a
    // numerical failure.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
