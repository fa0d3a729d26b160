use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mutsel_cli::{configure_threads, run, Task};

/// Nonlocal mutation-selection experiments.
#[derive(Debug, Parser)]
#[command(name = "mutsel", version)]
struct Args {
    /// Task to run.
    #[arg(value_enum)]
    task: Task,
    /// TOML run configuration (not needed for the reproduce tasks).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory; defaults to a timestamped directory next to the config.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = configure_threads().and_then(|()| run(args.task, args.config.as_deref(), args.out.as_deref(), args.force));
    match result {
        Ok(dir) => {
            println!("{} finished; artifacts in {}", args.task.name(), dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mutsel {}: {e}", args.task.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
