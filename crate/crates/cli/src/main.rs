use augmetrics::config::{ExperimentConfig, Task};
use augmetrics::error::{CliError, Result};
use augmetrics::harness::run_experiment;
use augmetrics::report::write_report;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "augmetrics",
    version,
    about = "Quantify data-augmentation policies by affinity, diversity, and switch-off lift"
)]
struct Cli {
    /// Path to the experiment TOML config (required by all commands except `report`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory for runs, results, and reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the config's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train each policy on each seed and record losses and accuracies.
    Train,
    /// Measure affinity (clean-model accuracy shift on augmented validation data).
    Affinity,
    /// Measure diversity (final training loss, conditional entropy, steps to threshold).
    Diversity,
    /// Sweep switch-off steps and report the lift at the best one.
    Switchoff,
    /// Run the two-Gaussian toy experiment and emit the affinity/KL grids.
    Toygauss,
    /// Run every task listed in the config.
    Sweep,
    /// Summarize an existing results directory.
    Report,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let tasks: Option<Vec<Task>> = match cli.command {
        Command::Train => Some(vec![Task::Diversity]),
        Command::Affinity => Some(vec![Task::Affinity]),
        Command::Diversity => Some(vec![Task::Diversity, Task::Entropy]),
        Command::Switchoff => Some(vec![Task::Switchoff]),
        Command::Toygauss => Some(vec![Task::Toygauss]),
        Command::Sweep => None,
        Command::Report => {
            let table = write_report(&cli.out)?;
            print!("{table}");
            return Ok(());
        }
    };
    let mut cfg = load_config(cli)?;
    if let Some(tasks) = tasks {
        cfg.tasks = tasks;
    }
    let outcome = run_experiment(&cfg, &cli.out, cli.jobs)?;
    eprintln!(
        "{} jobs ({} cached); outputs in {}",
        outcome.manifest.total_jobs,
        outcome.manifest.cached_jobs,
        cli.out.display()
    );
    if let Some(path) = &outcome.results_path {
        eprintln!("results: {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests exit 0; real parse errors exit 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
