//! The `gwt` command-line tool as a library, so tests can drive it in-process.

pub mod args;
pub mod checks;
pub mod commands;
pub mod config;

use std::ffi::OsString;

use clap::Parser;

use args::{Cli, Command};

/// Exit status: 0 pass, 1 runtime failure or failed check, 2 usage error.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
    /// The command ran but its check did not pass.
    Check(String),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<gwt_core::Error> for CliError {
    fn from(e: gwt_core::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) | CliError::Check(_) => 1,
        }
    }
}

/// Keeps freed tensor buffers in the process heap instead of returning
/// them to the OS after every tape; the training loop frees and reallocates
/// the same sizes thousands of times.
pub fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator thresholds.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
    }
}

pub fn dispatch(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::SpectralVerify(a) => commands::spectral_verify(a),
        Command::EquivCheck(a) => commands::equiv(a),
        Command::GradCheck(a) => commands::grad_check(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Bench(a) => commands::bench_cmd(a),
        Command::PerturbSweep(a) => commands::perturb_cmd(a),
        Command::InitAblation(a) => commands::ablation_cmd(a),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match config::expand_args(argv) {
        Ok(a) => a,
        Err(e) => return report(e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> i32 {
    match &e {
        CliError::Usage(m) => eprintln!("error: {m}"),
        CliError::Runtime(err) => eprintln!("error: {err:#}"),
        CliError::Check(m) => eprintln!("FAIL: {m}"),
    }
    e.exit_code()
}
