use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinboson::harness::{
    analyze, emit_convergence, emit_figure_data, load_config, resolve_workers, run_sweep, workers_from_env,
    HarnessError, PointStatus, SweepConfig,
};

#[derive(Parser)]
#[command(name = "spinboson", version, about = "Spectral checks for truncated spin-boson Hamiltonians")]
struct Cli {
    /// Worker threads for grid evaluation (overrides the environment variable).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a configuration file.
    Validate { config: PathBuf },
    /// Run every configured check on the base point and print a JSON report.
    Analyze { config: PathBuf },
    /// Evaluate the sweep grid and write results.csv and results.json.
    Sweep {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write fiber ground energies along the eta axis.
    Figure {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write the cutoff convergence table of the base point.
    Convergence {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

const CHECK_FAILURE: u8 = 2;

fn workers(flag: Option<usize>, cfg: &SweepConfig) -> Result<usize, HarnessError> {
    if flag == Some(0) {
        return Err(HarnessError::Usage("--workers must be positive".into()));
    }
    let explicit = match flag {
        Some(n) => Some(n),
        None => workers_from_env()?,
    };
    Ok(resolve_workers(explicit, cfg))
}

fn load(path: &Path) -> Result<SweepConfig, HarnessError> {
    Ok(load_config(path)?)
}

fn run(cli: Cli) -> Result<u8, HarnessError> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!(
                "{}: valid; {} modes, order {}, grid of {} points, checks: {}",
                config.display(),
                cfg.base.modes().len(),
                cfg.base.order(),
                cfg.grid_size(),
                cfg.checks.iter().map(|c| c.name()).collect::<Vec<_>>().join(" ")
            );
            Ok(0)
        }
        Command::Analyze { config } => {
            let cfg = load(&config)?;
            let report = analyze(&cfg);
            let json = serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Internal(e.to_string()))?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "{json}").map_err(|e| HarnessError::Internal(e.to_string()))?;
            Ok(if report.status == PointStatus::Fail { CHECK_FAILURE } else { 0 })
        }
        Command::Sweep { config, output } => {
            let cfg = load(&config)?;
            let dir = output
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| HarnessError::Usage("no output directory: pass -o or set 'output' in the config".into()))?;
            let n = workers(cli.workers, &cfg)?;
            let out = run_sweep(&cfg, &dir, n)?;
            eprintln!(
                "{} grid points, {} with failures; wrote {} and {}",
                out.results.len(),
                out.failure_count(),
                out.csv.display(),
                out.json.display()
            );
            Ok(if out.failure_count() > 0 { CHECK_FAILURE } else { 0 })
        }
        Command::Figure { config, output } => {
            let cfg = load(&config)?;
            let n = workers(cli.workers, &cfg)?;
            let rows = emit_figure_data(&cfg, &output, n)?;
            eprintln!("{} rows written to {}", rows.len(), output.display());
            Ok(0)
        }
        Command::Convergence { config, output } => {
            let cfg = load(&config)?;
            let out = emit_convergence(&cfg, &output)?;
            eprintln!("{} cutoffs written to {}", out.table.rows.len(), output.display());
            if out.flagged() {
                eprintln!(
                    "warning: non_cauchy = {}, unbounded moments = {:?}",
                    out.table.non_cauchy, out.moments.unbounded
                );
                return Ok(CHECK_FAILURE);
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}
