//! Experiment configuration: one TOML file describes one experiment end to
//! end — domain, fields, parameter grids, verdict gates, and seeds — so a run
//! is reproducible from a single artifact. Unknown keys are rejected, and the
//! SHA-256 of the raw file (first 16 hex digits) is stamped into every output.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use qmlab_core::field::{MetricField, ScalarField};
use qmlab_core::grid::RegionSpec;
use qmlab_core::rates::{CutoffSpec, DomainSpec, ETargetRule, QuantitySpec};

use crate::error::CliError;

/// The experiment families the runner knows how to drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Interior-mass decay sweep with a theorem1-style verdict.
    SweepTheorem1,
    /// Boundary-flux decay sweep with a theorem2-style verdict.
    SweepTheorem2,
    /// Convexified-weight bracket certification (fixed γ or calibrated).
    CarlemanCertify,
    /// Weighted-estimate ratio table over an h grid.
    CarlemanInequality,
    /// Construction and audit of a compatible weight pair.
    CompatiblePair,
    /// Boundary-identity benchmark on the closed-form sine mode.
    Rellich,
    /// Spherical-cap norm and rate laboratory.
    Zonal,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SweepTheorem1 => "sweep-theorem1",
            ExperimentKind::SweepTheorem2 => "sweep-theorem2",
            ExperimentKind::CarlemanCertify => "carleman-certify",
            ExperimentKind::CarlemanInequality => "carleman-inequality",
            ExperimentKind::CompatiblePair => "compatible-pair",
            ExperimentKind::Rellich => "rellich",
            ExperimentKind::Zonal => "zonal",
        }
    }
}

fn default_metric() -> MetricField {
    MetricField::Identity
}

fn default_potential() -> ScalarField {
    ScalarField::Constant(0.0)
}

fn default_region_all() -> RegionSpec {
    RegionSpec::All
}

/// Sweep description: what to measure at each value of the semiclassical
/// parameter. The runner injects the experiment id, seed, and config hash.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub domain: DomainSpec,
    #[serde(default = "default_metric")]
    pub metric: MetricField,
    #[serde(default = "default_potential")]
    pub potential: ScalarField,
    pub h_list: Vec<f64>,
    pub nodes_per_h: f64,
    pub e_rule: ETargetRule,
    #[serde(default)]
    pub cutoff: Option<CutoffSpec>,
    pub quantities: Vec<QuantitySpec>,
}

/// How the quasimode precision exponent β is chosen when gating a verdict:
/// the exact-eigenfunction convention (`"exact"` → ∞), a fixed number, or a
/// rate fitted from a measured quantity (usually the residual series).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BetaRule {
    Named(String),
    Value(f64),
    Fit { fit: String },
}

impl Default for BetaRule {
    fn default() -> Self {
        BetaRule::Named("exact".into())
    }
}

/// Which verdict machinery interprets a fitted rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    /// Interior-mass lower bound: fitted decay must stay below the quasimode
    /// precision and clear the concavity/fit-quality gates.
    Theorem1,
    /// Boundary-flux lower bound, optionally requiring exponential flux decay
    /// when the boundary is classically forbidden.
    Theorem2,
    /// Plain rate fit gated only by the `[alpha_min, alpha_max]` window.
    Rate,
}

/// One verdict computed from a sweep table.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictSection {
    /// Label in `verdicts.json`; defaults to the quantity name.
    #[serde(default)]
    pub name: Option<String>,
    pub kind: VerdictKind,
    /// Which measured quantity the rate fit reads.
    pub quantity: String,
    #[serde(default)]
    pub beta: BetaRule,
    /// When set, the travel-cost prediction is the minimum degenerate-metric
    /// distance from the allowed set into this region, reported next to the
    /// fitted rate.
    #[serde(default)]
    pub agmon_region: Option<RegionSpec>,
    /// Energy defining the allowed set `{V ≤ E}` of the prediction.
    #[serde(default)]
    pub agmon_energy: f64,
    /// Theorem2 only: the boundary lies in the forbidden region, so the flux
    /// must itself decay at a positive rate.
    #[serde(default)]
    pub boundary_forbidden: bool,
    #[serde(default)]
    pub alpha_min: Option<f64>,
    #[serde(default)]
    pub alpha_max: Option<f64>,
}

/// Bracket-certification request: sample the convexity bracket of
/// `φ = e^{γψ}` over a region, an energy window, and characteristic covectors.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    pub domain: DomainSpec,
    /// Fixed nodes per axis.
    pub resolution: Vec<usize>,
    #[serde(default = "default_metric")]
    pub metric: MetricField,
    #[serde(default = "default_potential")]
    pub potential: ScalarField,
    pub psi: ScalarField,
    #[serde(default = "default_region_all")]
    pub region: RegionSpec,
    pub e_range: [f64; 2],
    pub x_samples: usize,
    pub xi_samples: usize,
    pub c_target: f64,
    /// Certify this exponent directly; omit to calibrate the smallest one.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Acceptance window for the calibrated (or fixed) exponent.
    #[serde(default)]
    pub gamma_window: Option<[f64; 2]>,
}

/// Whether a ratio table is expected to stay bounded below (a certified
/// weight) or to collapse (the discriminating-power control with a flat one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlKind {
    Positive,
    Negative,
}

/// Embedded certification request for the inequality weight; `ψ` and `γ` are
/// read off the weight itself, which must have the shape `e^{γψ}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityCertify {
    #[serde(default = "default_region_all")]
    pub region: RegionSpec,
    pub e_range: [f64; 2],
    pub x_samples: usize,
    pub xi_samples: usize,
    pub c_target: f64,
}

/// Weighted-estimate falsification table: minimum ratio over seeded samples,
/// per h.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalitySection {
    pub domain: DomainSpec,
    pub resolution: Vec<usize>,
    #[serde(default = "default_metric")]
    pub metric: MetricField,
    #[serde(default = "default_potential")]
    pub potential: ScalarField,
    pub weight: ScalarField,
    /// Boundary component with no vanishing hypothesis (its defect is not
    /// charged to the samples).
    pub gamma_piece: String,
    pub e_target: f64,
    pub h_list: Vec<f64>,
    /// Random band-limited samples per h; three structured falsifiers ride
    /// on top.
    pub n_samples: usize,
    pub control: ControlKind,
    /// Certification of the weight before the table is computed
    /// (positive control only).
    #[serde(default)]
    pub certify: Option<InequalityCertify>,
    /// Positive control: largest admissible fitted decay rate of the minimum
    /// ratio (log scale against 1/h).
    #[serde(default = "default_max_decay_rate")]
    pub max_decay_rate: f64,
    /// Negative control: required collapse factor between the coarsest and
    /// finest h.
    #[serde(default = "default_min_collapse")]
    pub min_collapse: f64,
}

fn default_max_decay_rate() -> f64 {
    0.02
}

fn default_min_collapse() -> f64 {
    10.0
}

/// Compatible-pair construction on a two-component domain.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    pub domain: DomainSpec,
    pub resolution: Vec<usize>,
    /// Observation component: both weights grow outward through it.
    pub gamma_piece: String,
}

/// Boundary-identity benchmark on the closed-form mode
/// `sin((k+1)π(x−lo)/(hi−lo))`, swept over grid resolutions.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RellichSection {
    pub lo: f64,
    pub hi: f64,
    /// Node counts, checked in order; consecutive gaps must improve.
    pub nodes: Vec<usize>,
    pub h: f64,
    pub delta: f64,
    /// Mode number: `k = 0` is the half-wave ground profile.
    #[serde(default)]
    pub mode_k: usize,
    pub gap_tol: f64,
    /// Required gap shrink factor between consecutive resolutions.
    #[serde(default)]
    pub improvement_min: Option<f64>,
}

/// Spherical-cap laboratory: exact-vs-quadrature norms, the cap-mass decay
/// rate in `h = (n(n+1))^{−1/2}`, and the analytic eigenvalue relation.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZonalSection {
    pub n_list: Vec<u32>,
    /// Cap boundary `sin θ ≤ s₀`.
    pub s0: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    #[serde(default = "default_norm_max_n")]
    pub norm_max_n: u32,
    #[serde(default = "default_norm_tol")]
    pub norm_tol: f64,
    #[serde(default = "default_eigen_ns")]
    pub eigen_ns: Vec<u32>,
    #[serde(default = "default_eigen_samples")]
    pub eigen_samples: usize,
    #[serde(default = "default_eigen_tol")]
    pub eigen_tol: f64,
}

fn default_norm_max_n() -> u32 {
    60
}

fn default_norm_tol() -> f64 {
    1e-9
}

fn default_eigen_ns() -> Vec<u32> {
    vec![1, 25]
}

fn default_eigen_samples() -> usize {
    100
}

fn default_eigen_tol() -> f64 {
    1e-9
}

/// A whole experiment as read from one TOML file. Exactly one of the
/// per-kind sections must be present, matching `experiment`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Experiment id written into every artifact row.
    pub id: String,
    /// Root of all seeded randomness in the run (`--seed` overrides).
    #[serde(default)]
    pub seed: u64,
    /// Default output directory (`--out` overrides).
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub verdict: Vec<VerdictSection>,
    #[serde(default)]
    pub certify: Option<CertifySection>,
    #[serde(default)]
    pub inequality: Option<InequalitySection>,
    #[serde(default)]
    pub pair: Option<PairSection>,
    #[serde(default)]
    pub rellich: Option<RellichSection>,
    #[serde(default)]
    pub zonal: Option<ZonalSection>,
}

/// A parsed config together with the hash of the exact bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// First 16 hex digits of the SHA-256 of the raw file.
    pub hash: String,
}

/// Read, hash, parse, and cross-validate a config file. Parse and validation
/// problems are schema errors; an unreadable file is an I/O error.
pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let mut digest = Sha256::new();
    digest.update(text.as_bytes());
    let hash: String = format!("{:x}", digest.finalize())[..16].to_string();

    let de = toml::de::Deserializer::new(&text);
    let mut unknown: Vec<String> = Vec::new();
    let config: ExperimentConfig =
        serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| CliError::Schema(e.to_string()))?;
    if !unknown.is_empty() {
        return Err(CliError::Schema(format!(
            "unknown keys: {}",
            unknown.join(", ")
        )));
    }
    validate(&config)?;
    Ok(LoadedConfig { config, hash })
}

/// The section carried by each experiment kind, by name, for error messages.
fn section_presence(config: &ExperimentConfig) -> Vec<(&'static str, bool, bool)> {
    let kind = config.experiment;
    vec![
        (
            "sweep",
            config.sweep.is_some(),
            matches!(
                kind,
                ExperimentKind::SweepTheorem1 | ExperimentKind::SweepTheorem2
            ),
        ),
        (
            "certify",
            config.certify.is_some(),
            kind == ExperimentKind::CarlemanCertify,
        ),
        (
            "inequality",
            config.inequality.is_some(),
            kind == ExperimentKind::CarlemanInequality,
        ),
        (
            "pair",
            config.pair.is_some(),
            kind == ExperimentKind::CompatiblePair,
        ),
        (
            "rellich",
            config.rellich.is_some(),
            kind == ExperimentKind::Rellich,
        ),
        ("zonal", config.zonal.is_some(), kind == ExperimentKind::Zonal),
    ]
}

fn validate(config: &ExperimentConfig) -> Result<(), CliError> {
    if config.id.is_empty() {
        return Err(CliError::Schema("id must be non-empty".into()));
    }
    for (name, present, wanted) in section_presence(config) {
        if wanted && !present {
            return Err(CliError::Schema(format!(
                "experiment kind {} requires a [{name}] section",
                config.experiment.name()
            )));
        }
        if present && !wanted {
            return Err(CliError::Schema(format!(
                "section [{name}] does not belong to experiment kind {}",
                config.experiment.name()
            )));
        }
    }
    let sweep_kind = matches!(
        config.experiment,
        ExperimentKind::SweepTheorem1 | ExperimentKind::SweepTheorem2
    );
    if !config.verdict.is_empty() && !sweep_kind {
        return Err(CliError::Schema(
            "[[verdict]] sections apply only to sweep experiments".into(),
        ));
    }
    if let Some(sweep) = &config.sweep {
        if sweep.h_list.is_empty() {
            return Err(CliError::Schema("sweep.h_list must be non-empty".into()));
        }
        if config.verdict.is_empty() {
            return Err(CliError::Schema(
                "a sweep experiment needs at least one [[verdict]] section".into(),
            ));
        }
        let known: Vec<&str> = sweep.quantities.iter().map(|q| q.name()).collect();
        for v in &config.verdict {
            if !known.contains(&v.quantity.as_str()) {
                return Err(CliError::Schema(format!(
                    "verdict quantity '{}' is not measured by the sweep (have: {})",
                    v.quantity,
                    known.join(", ")
                )));
            }
            if let BetaRule::Fit { fit } = &v.beta {
                if !known.contains(&fit.as_str()) {
                    return Err(CliError::Schema(format!(
                        "beta fit quantity '{fit}' is not measured by the sweep"
                    )));
                }
            }
            if let BetaRule::Named(name) = &v.beta {
                if name != "exact" {
                    return Err(CliError::Schema(format!(
                        "beta must be \"exact\", a number, or {{ fit = \"…\" }}; got \"{name}\""
                    )));
                }
            }
            if v.boundary_forbidden && v.kind != VerdictKind::Theorem2 {
                return Err(CliError::Schema(
                    "boundary_forbidden applies only to theorem2 verdicts".into(),
                ));
            }
        }
        let theorem2 = config.experiment == ExperimentKind::SweepTheorem2;
        for v in &config.verdict {
            let ok = match v.kind {
                VerdictKind::Theorem1 => !theorem2,
                VerdictKind::Theorem2 => theorem2,
                VerdictKind::Rate => true,
            };
            if !ok {
                return Err(CliError::Schema(format!(
                    "verdict kind does not match experiment kind {}",
                    config.experiment.name()
                )));
            }
        }
    }
    if let Some(ineq) = &config.inequality {
        if ineq.h_list.is_empty() {
            return Err(CliError::Schema(
                "inequality.h_list must be non-empty".into(),
            ));
        }
        if ineq.n_samples == 0 {
            return Err(CliError::Schema(
                "inequality.n_samples must be at least 1".into(),
            ));
        }
        match ineq.control {
            ControlKind::Negative => {
                if ineq.certify.is_some() {
                    return Err(CliError::Schema(
                        "a negative control deliberately uses a non-weight; drop [inequality.certify]"
                            .into(),
                    ));
                }
                if ineq.h_list.len() < 2 {
                    return Err(CliError::Schema(
                        "a collapse factor needs at least 2 values in inequality.h_list".into(),
                    ));
                }
            }
            ControlKind::Positive => {
                if ineq.certify.is_some() && !matches!(ineq.weight, ScalarField::ExpOf { .. }) {
                    return Err(CliError::Schema(
                        "certification reads γ and ψ off the weight, which must be exp_of".into(),
                    ));
                }
                if ineq.h_list.len() < 4 {
                    return Err(CliError::Schema(
                        "the decay-trend fit needs at least 4 values in inequality.h_list".into(),
                    ));
                }
            }
        }
    }
    if let Some(rellich) = &config.rellich {
        if !(rellich.hi > rellich.lo) {
            return Err(CliError::Schema("rellich interval is empty".into()));
        }
        if rellich.nodes.is_empty() {
            return Err(CliError::Schema("rellich.nodes must be non-empty".into()));
        }
        if rellich.improvement_min.is_some() && rellich.nodes.len() < 2 {
            return Err(CliError::Schema(
                "gap improvement needs at least two resolutions".into(),
            ));
        }
    }
    if let Some(zonal) = &config.zonal {
        if zonal.n_list.len() < 4 {
            return Err(CliError::Schema(
                "zonal.n_list needs at least 4 entries for a rate fit".into(),
            ));
        }
        if !(zonal.s0 > 0.0 && zonal.s0 < 1.0) {
            return Err(CliError::Schema("zonal.s0 must lie in (0, 1)".into()));
        }
    }
    Ok(())
}
