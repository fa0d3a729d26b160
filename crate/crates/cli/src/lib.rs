//! Command-line runner: one task per invocation, a byte-stable `report.txt`
//! plus CSV artifacts in the output directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod reproduce;
pub mod tasks;

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::config::LoadedConfig;
use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    Validate,
    Eigen,
    Criteria,
    Gap,
    EvolveLinear,
    EvolveNonlinear,
    ReproduceExample1,
    ReproduceExample2,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Validate => "validate",
            Task::Eigen => "eigen",
            Task::Criteria => "criteria",
            Task::Gap => "gap",
            Task::EvolveLinear => "evolve-linear",
            Task::EvolveNonlinear => "evolve-nonlinear",
            Task::ReproduceExample1 => "reproduce-example1",
            Task::ReproduceExample2 => "reproduce-example2",
        }
    }

    fn needs_config(self) -> bool {
        !matches!(self, Task::ReproduceExample1 | Task::ReproduceExample2)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("reproduction assertion failed: {0}")]
    Reproduction(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Reproduction(_) => 5,
        }
    }

    /// Maps a core error raised by `module`.
    pub fn from_core(module: &str, e: mutsel_core::Error) -> Self {
        use mutsel_core::Error as E;
        match e {
            E::Precondition(_) => CliError::Validation(format!("{module}: {e}")),
            E::InvalidParameter(_) | E::Table { .. } | E::GridMismatch => CliError::Config(format!("{module}: {e}")),
            _ => CliError::Numerical(format!("{module}: {e}")),
        }
    }
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Numerical(format!("cannot write {}: {e}", path.display()))
}

/// Output directory next to the config (or in the working directory), timestamped.
pub fn default_out_dir(task: Task, config: Option<&Path>) -> PathBuf {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    match config {
        Some(c) => {
            let stem = c.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
            c.parent().unwrap_or(Path::new("")).join(format!("{stem}-{}-{stamp}", task.name()))
        }
        None => PathBuf::from(format!("{}-{stamp}", task.name())),
    }
}

fn prepare_out(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(true);
        if non_empty && !force {
            return Err(CliError::Config(format!("output directory {} is not empty; pass --force to overwrite", dir.display())));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

/// Runs `task`, writing artifacts to `out` (or the default directory).
/// The report is written even when the task fails after validation.
pub fn run(task: Task, config: Option<&Path>, out: Option<&Path>, force: bool) -> Result<PathBuf, CliError> {
    let loaded = match config {
        Some(p) => Some(LoadedConfig::load(p)?),
        None if task.needs_config() => return Err(CliError::Config(format!("task {} needs --config", task.name()))),
        None => None,
    };
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| default_out_dir(task, config));
    prepare_out(&dir, force)?;

    let start = Instant::now();
    let mut report = Report::new(task.name());
    let result = match (task, &loaded) {
        (Task::ReproduceExample1, _) => reproduce::example1(&dir, &mut report),
        (Task::ReproduceExample2, _) => reproduce::example2(&dir, &mut report),
        (_, Some(cfg)) => tasks::run_task(task, cfg, &dir, &mut report),
        (_, None) => unreachable!("config presence checked above"),
    };
    report.section("status").text("outcome", match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error (exit {}): {e}", e.exit_code()),
    });
    let path = dir.join("report.txt");
    report.write(&path).map_err(|e| io_err(&path, e))?;
    let timing = dir.join("timing.txt");
    std::fs::write(&timing, format!("elapsed_seconds = {:.3}\n", start.elapsed().as_secs_f64())).map_err(|e| io_err(&timing, e))?;
    result.map(|()| dir)
}

/// Caps the global thread pool from `MUTSEL_THREADS`.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("MUTSEL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("MUTSEL_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))
}
