//! Config-driven experiment runner. A TOML file names one experiment kind
//! and its parameters; `run` executes it and writes deterministic artifacts
//! (result table, verdicts, certificates, plot data) into one directory.
//! Identical config and seed produce byte-identical outputs.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod plot;
pub mod runner;
pub mod verify;

use std::path::PathBuf;

pub use artifacts::{ArtifactSink, Format, VERSION};
pub use config::{load_config, ExperimentConfig, ExperimentKind, LoadedConfig};
pub use error::CliError;
pub use runner::{execute, ExperimentOutput};
pub use verify::{run_checks, CheckOutcome, VerifyOptions};

use qmlab_core::rates::{Verdict, VerdictReport};

/// Overrides applied on top of the config file.
#[derive(Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Format,
}

/// What a completed run produced.
pub struct RunReport {
    pub out_dir: PathBuf,
    pub verdicts: Vec<VerdictReport>,
    pub all_pass: bool,
    pub written: Vec<String>,
}

/// Load a config, run its experiment, and persist every artifact.
/// Computation failures still write an `error.json` marker next to whatever
/// was produced before the failure.
pub fn run(config_path: &std::path::Path, opts: &RunOptions) -> Result<RunReport, CliError> {
    let loaded = load_config(config_path)?;
    let cfg = &loaded.config;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let out_dir = opts
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("qmlab-out").join(&cfg.id));
    let mut sink = ArtifactSink::create(&out_dir, &loaded.hash, opts.format)?;

    let output = match execute(cfg, seed, &loaded.hash) {
        Ok(output) => output,
        Err(err) => {
            if matches!(err, CliError::Compute(_)) {
                let _ = sink.write_error(&err.to_string());
            }
            return Err(err);
        }
    };

    sink.write_table(&output.table)?;
    for plot in &output.plots {
        sink.write_plot(plot)?;
    }
    if let Some(certificates) = &output.certificates {
        sink.write_certificates(certificates)?;
    }
    let all_pass = output
        .verdicts
        .iter()
        .all(|v| v.verdict != Verdict::Fail);
    sink.write_verdicts(
        cfg.experiment.name(),
        &cfg.id,
        seed,
        &output.verdicts,
        all_pass,
    )?;
    Ok(RunReport {
        out_dir,
        verdicts: output.verdicts,
        all_pass,
        written: sink.written,
    })
}
