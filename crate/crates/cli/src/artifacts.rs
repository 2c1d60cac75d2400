//! Artifact persistence. Every file embeds the config hash and tool version;
//! nothing embeds a timestamp, so identical runs produce identical bytes.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use qmlab_core::rates::{SweepResult, VerdictReport};

use crate::error::CliError;
use crate::plot::{render_dat, render_svg, PlotSeries};

/// Which tabular renderings `run` writes next to the verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    Csv,
    Json,
    #[default]
    Both,
}

impl Format {
    pub fn parse(s: &str) -> Result<Format, CliError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "both" => Ok(Format::Both),
            other => Err(CliError::Schema(format!(
                "format must be csv, json, or both; got {other}"
            ))),
        }
    }
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writer for one run's output directory.
pub struct ArtifactSink {
    dir: PathBuf,
    hash: String,
    format: Format,
    /// Relative names of everything written, in write order.
    pub written: Vec<String>,
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

impl ArtifactSink {
    pub fn create(dir: &Path, hash: &str, format: Format) -> Result<ArtifactSink, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
        Ok(ArtifactSink {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            format,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_file(&self.dir, name, bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// `results.csv` (rates row schema behind a hash/version comment line)
    /// and/or `results.json`, per the configured format.
    pub fn write_table(&mut self, table: &SweepResult) -> Result<(), CliError> {
        if matches!(self.format, Format::Csv | Format::Both) {
            let csv = format!(
                "# config_hash={} version={}\n{}",
                self.hash,
                VERSION,
                table.to_csv()
            );
            self.put("results.csv", csv.as_bytes())?;
        }
        if matches!(self.format, Format::Json | Format::Both) {
            let doc = json!({
                "config_hash": self.hash,
                "version": VERSION,
                "results": table,
            });
            self.put("results.json", pretty(&doc)?.as_bytes())?;
        }
        Ok(())
    }

    /// `verdicts.json`: the run's summary, one entry per configured verdict.
    pub fn write_verdicts(
        &mut self,
        experiment: &str,
        id: &str,
        seed: u64,
        verdicts: &[VerdictReport],
        overall_pass: bool,
    ) -> Result<(), CliError> {
        let doc = json!({
            "config_hash": self.hash,
            "version": VERSION,
            "experiment": experiment,
            "id": id,
            "seed": seed,
            "overall": if overall_pass { "PASS" } else { "FAIL" },
            "verdicts": verdicts,
        });
        self.put("verdicts.json", pretty(&doc)?.as_bytes())
    }

    /// `certificates.json`, written only when the experiment produced one.
    pub fn write_certificates<T: Serialize>(&mut self, certificates: &T) -> Result<(), CliError> {
        let doc = json!({
            "config_hash": self.hash,
            "version": VERSION,
            "certificates": certificates,
        });
        self.put("certificates.json", pretty(&doc)?.as_bytes())
    }

    /// `plot_<name>.dat` and `plot_<name>.svg` for one series.
    pub fn write_plot(&mut self, series: &PlotSeries) -> Result<(), CliError> {
        let dat = render_dat(series, &self.hash, VERSION);
        self.put(&format!("plot_{}.dat", series.name), dat.as_bytes())?;
        let svg = render_svg(series, &self.hash, VERSION);
        self.put(&format!("plot_{}.svg", series.name), svg.as_bytes())
    }

    /// Error report for a run that died after config validation; keeps
    /// whatever artifacts were already written in place.
    pub fn write_error(&mut self, error: &str) -> Result<(), CliError> {
        let doc = json!({
            "config_hash": self.hash,
            "version": VERSION,
            "error": error,
        });
        self.put("error.json", pretty(&doc)?.as_bytes())
    }
}

fn pretty(doc: &serde_json::Value) -> Result<String, CliError> {
    serde_json::to_string_pretty(doc)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Io(format!("serializing: {e}")))
}
