use clap::{Parser, Subcommand};
use stable_euler::drift::{CATALOG, TIME_PROFILES};
use stable_euler::experiment::{self, ExperimentConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "stable-euler", about = "Weak-error experiments for stable-driven SDEs")]
struct Cli {
    /// Worker threads (default: logical cores). Never changes results.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Parse and check a config file without running it.
    Validate { config: PathBuf },
    /// List the drift catalog and time profiles.
    ListDrifts,
    /// Print the library version.
    Version,
}

/// Exit code for configuration and numerical errors; failed checks exit 1.
const ERROR_EXIT: u8 = 2;

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(ERROR_EXIT)
    })
}

fn run(path: &Path) -> ExitCode {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let dir = experiment::resolve_output_dir(&cfg, Some(path));
    let outcome = match experiment::execute(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(ERROR_EXIT);
        }
    };
    if let Err(e) = experiment::write_outcome(&outcome, &dir) {
        eprintln!("error: writing {}: {e}", dir.display());
        return ExitCode::from(ERROR_EXIT);
    }
    let m = &outcome.manifest;
    if let Some(note) = &m.degenerate {
        println!("note: {note}");
    }
    for c in &m.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{status} {:<28} {:>14.6e}  {}", c.name, c.value, c.rule);
    }
    println!("artifacts in {} ({:.1} s)", dir.display(), m.wall_time_seconds);
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn validate(path: &Path) -> ExitCode {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    println!(
        "ok: {} (alpha = {}, beta = {}, gamma/alpha = {:.4}), output to {}",
        cfg.kind.label(),
        cfg.model.alpha,
        cfg.model.beta,
        cfg.target_rate(),
        experiment::resolve_output_dir(&cfg, Some(path)).display()
    );
    ExitCode::SUCCESS
}

fn list_drifts() -> ExitCode {
    println!("drifts:");
    for e in CATALOG {
        println!("  {:<14} {}", e.name, e.summary);
    }
    println!("time profiles:");
    for (name, summary) in TIME_PROFILES {
        println!("  {name:<20} {summary}");
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(ERROR_EXIT);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(ERROR_EXIT);
        }
    }
    match cli.command {
        Command::Run { config } => run(&config),
        Command::Validate { config } => validate(&config),
        Command::ListDrifts => list_drifts(),
        Command::Version => {
            println!("stable-euler {}", experiment::VERSION);
            ExitCode::SUCCESS
        }
    }
}

