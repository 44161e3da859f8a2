//! Command-line driver: every subcommand reads and writes below one output root.
//!
//! ```text
//! <out>/catalog/       tasks.json, selection.csv, pairs.txt
//! <out>/corpus/        <lang>.tsv, filter_stats.json
//! <out>/tasks/         <task>.{train,val,test}.tsv, <task>.json
//! <out>/embeddings/    <model>_<lang>.tpeb
//! <out>/runs/          <model>/<task>/<layer-source>/{checkpoint.tpck,report.json,report.csv,training_log.csv}
//! <out>/evaluations/   <model>/<task>/<layer-source>/<split>/report.{json,csv}
//! <out>/report/        tables/, heatmaps/, layers/, projections/
//! <out>/gradcheck/     results.json
//! ```
//!
//! Exit codes: 0 success, 1 user error (bad flags, missing or malformed input),
//! 2 internal error.

pub mod args;
mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;

pub use args::Cli;

/// Invalid invocation or input detected by the driver itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USER;
        }
        if let Some(e) = cause.downcast_ref::<typoprobe::Error>() {
            return if e.is_user_error() { EXIT_USER } else { EXIT_INTERNAL };
        }
    }
    EXIT_INTERNAL
}

/// Directory layout below the output root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Layout { root: root.to_path_buf() }
    }

    pub fn catalog(&self) -> PathBuf {
        self.root.join("catalog")
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn tasks(&self) -> PathBuf {
        self.root.join("tasks")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings")
    }

    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn run_dir(&self, model: &str, task: &str, source: &str) -> PathBuf {
        self.runs().join(model).join(task).join(source)
    }

    pub fn evaluations(&self) -> PathBuf {
        self.root.join("evaluations")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn gradcheck(&self) -> PathBuf {
        self.root.join("gradcheck")
    }
}

/// Parses `argv`, runs the command, prints any error, and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USER,
            };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
