use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use subheat_cli::{parse_config, run, Command, RunError};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Kernels,
    Verify,
    Spaces,
    Equiv,
    Selftest,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Kernels => Command::Kernels,
            Cmd::Verify => Command::Verify,
            Cmd::Spaces => Command::Spaces,
            Cmd::Equiv => Command::Equiv,
            Cmd::Selftest => Command::Selftest,
        }
    }
}

/// Fractional heat semigroups of Schrodinger operators: kernels, bound certificates
/// and function-space checks on a grid.
#[derive(Debug, Parser)]
#[command(name = "subheat", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Configuration file (sectioned key=value).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random suites (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match parse_config(&text).and_then(|c| c.with_overrides(cli.command.into(), cli.seed, cli.out)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(report) => {
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            for c in report.failures() {
                eprintln!("FAIL {} = {} (bound {})", c.name, c.value, c.bound);
            }
            println!("{}: {}", report.command, if report.pass { "pass" } else { "FAIL" });
            ExitCode::from(if report.pass { 0 } else { 1 })
        }
        Err(RunError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
