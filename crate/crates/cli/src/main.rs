//! `qmlab` binary: `run` executes one experiment config, `verify` runs the
//! built-in cross-checks. Exit codes: 0 all verdicts pass, 1 a verdict or
//! check failed, 2 config schema error, 3 computation error, 4 i/o error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qmlab_cli::{run, run_checks, Format, RunOptions, VerifyOptions};

#[derive(Parser)]
#[command(name = "qmlab", version, about = "Semiclassical quasimode laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config and write its artifacts.
    Run {
        /// Experiment description file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: from the config, else qmlab-out/<id>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Size of the worker thread pool (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Table format: csv, json, or both.
        #[arg(long, default_value = "both")]
        format: String,
    },
    /// Run the built-in cross-checks and report one line per check.
    Verify {
        /// Only run checks whose name contains this substring.
        #[arg(long)]
        filter: Option<String>,
        /// Size of the worker thread pool (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Deliberately break one bracket evaluation (harness self-test).
        #[arg(long, hide = true)]
        inject_bracket_sign_flip: bool,
    },
}

fn set_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            threads,
            format,
        } => {
            set_threads(threads);
            let format = match Format::parse(&format) {
                Ok(f) => f,
                Err(err) => {
                    eprintln!("{err}");
                    return ExitCode::from(err.exit_code());
                }
            };
            let opts = RunOptions { out, seed, format };
            match run(&config, &opts) {
                Ok(report) => {
                    for v in &report.verdicts {
                        println!("verdict {}: {}", v.experiment_id, v.verdict);
                    }
                    println!(
                        "artifacts in {}: {}",
                        report.out_dir.display(),
                        report.written.join(", ")
                    );
                    if report.all_pass {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(err) => {
                    eprintln!("{err}");
                    ExitCode::from(err.exit_code())
                }
            }
        }
        Command::Verify {
            filter,
            threads,
            inject_bracket_sign_flip,
        } => {
            set_threads(threads);
            let opts = VerifyOptions {
                filter,
                flip_bracket_sign: inject_bracket_sign_flip,
            };
            match run_checks(&opts) {
                Ok(outcomes) => {
                    let mut all = true;
                    for c in &outcomes {
                        let status = if c.pass { "PASS" } else { "FAIL" };
                        println!("verify {}: {status} — {}", c.name, c.detail);
                        all &= c.pass;
                    }
                    if all {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(err) => {
                    eprintln!("{err}");
                    ExitCode::from(err.exit_code())
                }
            }
        }
    }
}
