//! `mirrorless`: command-line front end for the mirrorless parametric
//! oscillator simulator.

mod commands;
mod config;
mod error;
mod svg;
mod validate;

use clap::{Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use config::{Format, RunConfig};
use error::CliError;

/// Relative output paths are resolved against this directory when it is set.
const OUTPUT_DIR_ENV: &str = "MIRRORLESS_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "mirrorless", version, about = "Mirrorless parametric oscillator simulator")]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Overrides mc.master_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Threshold pump intensity, photon flux and zero-branch stability.
    Threshold,
    /// Steady-state field profiles.
    Steady,
    /// Bifurcation sweep of E/E_d over alpha.
    Sweep,
    /// Closed-form and quadrature linewidths.
    Linewidth,
    /// Monte Carlo phase-noise spectrum and linewidth.
    McLinewidth,
    /// Run the cross-check suite; exit 1 if any check fails.
    Validate {
        /// Check to omit (repeatable): conservation, threshold, locking, bridge, quadrature, mc.
        #[arg(long)]
        skip: Vec<String>,
    },
    /// Configuration utilities.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Debug, Subcommand)]
enum ConfigAction {
    /// Print the effective configuration with defaults applied.
    Show,
}

fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn side_path(main: Option<&Path>, command: &str, suffix: &str) -> PathBuf {
    match main {
        Some(p) => {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| command.into());
            p.with_file_name(format!("{stem}{suffix}"))
        }
        None => resolve(Path::new(&format!("{command}{suffix}"))),
    }
}

fn emit(main: Option<&Path>, text: &str) -> Result<(), CliError> {
    match main {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.mc.master_seed = seed;
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    if let Some(p) = &cli.out {
        cfg.output.path = Some(p.to_string_lossy().into_owned());
    }
    let out_path = cfg.output.path.as_ref().map(|p| resolve(Path::new(p)));
    let fmt = cfg.output.format;

    let (name, output) = match cli.command {
        Command::Config { action: ConfigAction::Show } => {
            println!("{}", cfg.to_json());
            return Ok(());
        }
        Command::Validate { skip } => {
            let results = validate::run(&cfg, &skip)?;
            let mut text = String::new();
            for r in &results {
                text += &format!("{} {}: {}\n", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            print!("{text}");
            if let Some(p) = &out_path {
                let body = match fmt {
                    Format::Json => serde_json::to_string_pretty(&results).expect("serialisable") + "\n",
                    Format::Csv => {
                        let mut s = String::from("check,passed,detail\n");
                        for r in &results {
                            s += &format!("{},{},\"{}\"\n", r.name, r.passed, r.detail.replace('"', "'"));
                        }
                        s
                    }
                };
                std::fs::write(p, body)?;
            }
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(CliError::Check(failed.join(", ")));
            }
            return Ok(());
        }
        Command::Threshold => ("threshold", commands::threshold(&cfg, fmt)?),
        Command::Steady => ("steady", commands::steady(&cfg, fmt)?),
        Command::Sweep => ("sweep", commands::sweep(&cfg, fmt)?),
        Command::Linewidth => ("linewidth", commands::linewidth(&cfg, fmt)?),
        Command::McLinewidth => ("mc-linewidth", commands::mc_linewidth(&cfg, fmt)?),
    };
    emit(out_path.as_deref(), &output.main)?;
    for (suffix, body) in &output.side {
        std::fs::write(side_path(out_path.as_deref(), name, suffix), body)?;
    }
    match output.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
