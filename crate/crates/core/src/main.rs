use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use kernreg::experiment::{run_checks, run_complexity, run_rates, ExperimentConfig};
use kernreg::plot::emit_plot;
use kernreg::Error;

#[derive(Parser)]
#[command(name = "kernreg", version, about = "Regularized kernel least squares lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults are used for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Excess risk against n for each regularizer, with fitted slopes.
    Rates(Common),
    /// Runs the check suite and writes checks.csv.
    Checks(Common),
    /// Gaussian complexity and supremum sweeps.
    Complexity(Common),
    /// Draws a log-log SVG from a rates.csv.
    Plot {
        /// rates.csv written by `rates`.
        csv: PathBuf,
        /// SVG path; defaults to rates.svg next to the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prints the default configuration as JSON.
    Config,
}

enum Failure {
    Usage(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn save_config(cfg: &ExperimentConfig, dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Rates(common) => {
            let cfg = load(&common)?;
            let dir = cfg.output_dir.clone();
            info!("rates, config {}", cfg.hash());
            let result = run_rates(&cfg)?;
            result.save(&dir, cfg.spectrum.p, cfg.task.sigma)?;
            save_config(&cfg, &dir)?;
            for s in &result.slopes {
                match &s.fit {
                    Some(fit) => println!(
                        "{:<10} slope {:+.4}  adjusted {:+.4}  predicted {:+.4}",
                        s.kind.as_str(),
                        fit.slope,
                        s.adjusted_slope,
                        s.predicted_slope
                    ),
                    None => println!("{:<10} too few completed cells ({:.0}%)", s.kind.as_str(), 100.0 * s.completion),
                }
            }
            Ok(())
        }
        Command::Checks(common) => {
            let cfg = load(&common)?;
            let dir = cfg.output_dir.clone();
            info!("checks, config {}", cfg.hash());
            let report = run_checks(&cfg)?;
            report.save(&dir)?;
            save_config(&cfg, &dir)?;
            for row in &report.rows {
                println!(
                    "{} {:<28} {:.6e}  [{:.3e}, {:.3e}]",
                    if row.pass { "pass" } else { "FAIL" },
                    row.name,
                    row.value,
                    row.lower,
                    row.upper
                );
            }
            if report.all_pass() {
                Ok(())
            } else {
                let failed = report.rows.iter().filter(|r| !r.pass).count();
                Err(Failure::Check(format!("{failed} of {} checks failed", report.rows.len())))
            }
        }
        Command::Complexity(common) => {
            let cfg = load(&common)?;
            let dir = cfg.output_dir.clone();
            let (g, s) = run_complexity(&cfg, &dir)?;
            save_config(&cfg, &dir)?;
            println!("{} gaussian rows, {} supremum rows written to {}", g.len(), s.len(), dir.display());
            Ok(())
        }
        Command::Plot { csv, out } => {
            let out = out.unwrap_or_else(|| csv.with_file_name("rates.svg"));
            emit_plot(&csv, &out)?;
            println!("{}", out.display());
            Ok(())
        }
        Command::Config => {
            let text = ExperimentConfig::default().to_json()?;
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            error!("{msg}");
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
