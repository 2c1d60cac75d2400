//! Experiment dispatch: each config kind maps to one driver that produces a
//! result table in the common row schema, a list of verdicts, optional
//! certificates, and the plot series to persist.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde_json::json;

use qmlab_core::carleman::certify::{calibrate_gamma, certify_weight};
use qmlab_core::carleman::inequality::test_carleman_inequality;
use qmlab_core::carleman::morse::MorseReport;
use qmlab_core::carleman::pair::make_compatible_pair;
use qmlab_core::field::{MetricField, ScalarField};
use qmlab_core::grid::{Grid, RegionSpec, Resolution};
use qmlab_core::quasimode::agmon_distance;
use qmlab_core::rates::{
    check_rellich, fit_quantity, fit_rate_from_logs, run_sweep, verdict_theorem1,
    verdict_theorem2, RateFit, SweepResult, SweepRow, SweepSpec, Verdict, VerdictReport,
};
use qmlab_core::zonal::{
    verify_eigen_relation, zonal_norm_exact, zonal_norm_quadrature, zonal_rate_check, ZonalMode,
};

use crate::config::{
    BetaRule, CertifySection, ControlKind, ExperimentConfig, ExperimentKind, InequalitySection,
    PairSection, RellichSection, SweepSection, VerdictKind, VerdictSection, ZonalSection,
};
use crate::error::CliError;
use crate::plot::PlotSeries;

/// Everything a driver hands back for persistence.
pub struct ExperimentOutput {
    pub table: SweepResult,
    pub verdicts: Vec<VerdictReport>,
    pub certificates: Option<serde_json::Value>,
    pub plots: Vec<PlotSeries>,
}

/// Run the experiment described by a validated config.
pub fn execute(
    cfg: &ExperimentConfig,
    seed: u64,
    hash: &str,
) -> Result<ExperimentOutput, CliError> {
    match cfg.experiment {
        ExperimentKind::SweepTheorem1 | ExperimentKind::SweepTheorem2 => {
            let section = cfg.sweep.as_ref().expect("validated");
            run_sweep_kind(cfg, section, seed, hash)
        }
        ExperimentKind::CarlemanCertify => {
            let section = cfg.certify.as_ref().expect("validated");
            run_certify(cfg, section, seed, hash)
        }
        ExperimentKind::CarlemanInequality => {
            let section = cfg.inequality.as_ref().expect("validated");
            run_inequality(cfg, section, seed, hash)
        }
        ExperimentKind::CompatiblePair => {
            let section = cfg.pair.as_ref().expect("validated");
            run_pair(cfg, section, seed, hash)
        }
        ExperimentKind::Rellich => {
            let section = cfg.rellich.as_ref().expect("validated");
            run_rellich(cfg, section, hash)
        }
        ExperimentKind::Zonal => {
            let section = cfg.zonal.as_ref().expect("validated");
            run_zonal(cfg, section, seed, hash)
        }
    }
}

fn empty_table(id: &str, hash: &str) -> SweepResult {
    SweepResult {
        experiment_id: id.to_string(),
        config_hash: hash.to_string(),
        rows: Vec::new(),
    }
}

fn blank_report(id: &str, name: &str, theorem: &str) -> VerdictReport {
    VerdictReport {
        experiment_id: format!("{id}:{name}"),
        theorem: theorem.to_string(),
        alpha: None,
        c: None,
        rms: None,
        window: None,
        verdict: Verdict::Fail,
        constants: BTreeMap::new(),
        notes: Vec::new(),
    }
}

fn apply_fit(report: &mut VerdictReport, fit: &RateFit) {
    report.alpha = Some(fit.alpha);
    report.c = Some(fit.c);
    report.rms = Some(fit.rms);
    report.window = Some(fit.window);
}

/// Hard acceptance window on the fitted rate, applied after the verdict
/// machinery: a rate outside `[alpha_min, alpha_max]` downgrades to FAIL.
fn apply_window(report: &mut VerdictReport, lo: Option<f64>, hi: Option<f64>) {
    if lo.is_none() && hi.is_none() {
        return;
    }
    if report.verdict == Verdict::SharpnessConfirmed {
        return;
    }
    let Some(alpha) = report.alpha else {
        report.verdict = Verdict::Fail;
        report
            .notes
            .push("an acceptance window is configured but no rate was fitted".into());
        return;
    };
    let below = lo.is_some_and(|m| alpha < m);
    let above = hi.is_some_and(|m| alpha > m);
    if below || above {
        report.verdict = Verdict::Fail;
        report.notes.push(format!(
            "fitted rate {alpha:.4} outside the acceptance window [{}, {}]",
            lo.map_or("-inf".into(), |v| format!("{v}")),
            hi.map_or("+inf".into(), |v| format!("{v}")),
        ));
    }
}

/// Minimum travel cost from the allowed set `{V ≤ e}` into `region` on the
/// finest swept grid. When no node satisfies `V ≤ e` (a well bottom falling
/// between nodes), the source shrinks to the grid argmin of `V`, the
/// degenerate limit of the allowed set.
fn agmon_prediction(
    spec: &SweepSpec,
    region: &RegionSpec,
    e: f64,
) -> Result<f64, CliError> {
    let h_min = spec
        .h_list
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let grid = spec.domain.build(Resolution::NodesPerH {
        rho: spec.nodes_per_h,
        h: h_min,
    })?;
    let sub = grid.subregion(region.clone());
    if sub.is_empty() {
        return Err(CliError::Compute(
            "travel-cost prediction region contains no grid nodes".into(),
        ));
    }
    let v_min = (0..grid.num_nodes())
        .map(|id| spec.potential.eval(&grid.point(id)))
        .fold(f64::INFINITY, f64::min);
    let level = e.max(v_min);
    let mut sources = grid.subregion(RegionSpec::Sublevel {
        field: spec.potential.clone(),
        level,
    });
    if sources.is_empty() {
        // Representable but strictly between node values: take the argmin.
        for id in 0..grid.num_nodes() {
            sources.mask[id] = spec.potential.eval(&grid.point(id)) <= v_min;
        }
    }
    let field = agmon_distance(&grid, &spec.metric, &spec.potential, e, Some(&sources))?;
    let pred = (0..grid.num_nodes())
        .filter(|id| sub.mask[*id])
        .map(|id| field.d[id])
        .fold(f64::INFINITY, f64::min);
    Ok(pred)
}

fn plot_from_series(name: &str, x_label: &str, series: &[(f64, f64)]) -> PlotSeries {
    PlotSeries {
        name: name.to_string(),
        x_label: x_label.to_string(),
        y_label: "log value".into(),
        points: series
            .iter()
            .filter(|(_, y)| *y > 0.0 && y.is_finite())
            .map(|&(h, y)| (1.0 / h, y.ln()))
            .collect(),
    }
}

fn run_sweep_kind(
    cfg: &ExperimentConfig,
    section: &SweepSection,
    seed: u64,
    hash: &str,
) -> Result<ExperimentOutput, CliError> {
    let spec = SweepSpec {
        experiment_id: cfg.id.clone(),
        domain: section.domain.clone(),
        metric: section.metric.clone(),
        potential: section.potential.clone(),
        h_list: section.h_list.clone(),
        nodes_per_h: section.nodes_per_h,
        e_rule: section.e_rule.clone(),
        cutoff: section.cutoff.clone(),
        quantities: section.quantities.clone(),
        seed,
        config_hash: hash.to_string(),
    };
    let sweep = run_sweep(&spec)?;
    let mut verdicts = Vec::new();
    for v in &cfg.verdict {
        verdicts.push(sweep_verdict(&sweep, &spec, cfg, v)?);
    }
    let plots = spec
        .quantities
        .iter()
        .map(|q| plot_from_series(q.name(), "1/h", &sweep.series(q.name())))
        .collect();
    Ok(ExperimentOutput {
        table: sweep,
        verdicts,
        certificates: None,
        plots,
    })
}

fn sweep_verdict(
    sweep: &SweepResult,
    spec: &SweepSpec,
    cfg: &ExperimentConfig,
    v: &VerdictSection,
) -> Result<VerdictReport, CliError> {
    let fit = fit_quantity(sweep, &v.quantity).ok();
    let beta = match &v.beta {
        BetaRule::Named(_) => f64::INFINITY,
        BetaRule::Value(x) => *x,
        BetaRule::Fit { fit: q } => match fit_quantity(sweep, q) {
            Ok(f) => f.alpha,
            Err(_) => f64::NAN,
        },
    };
    let prediction = match &v.agmon_region {
        Some(region) => Some(agmon_prediction(spec, region, v.agmon_energy)?),
        None => None,
    };
    let mut report = match v.kind {
        VerdictKind::Theorem1 => {
            verdict_theorem1(sweep, &v.quantity, fit.as_ref(), beta, prediction)
        }
        VerdictKind::Theorem2 => verdict_theorem2(
            sweep,
            &v.quantity,
            fit.as_ref(),
            beta,
            prediction,
            v.boundary_forbidden,
        ),
        VerdictKind::Rate => {
            let name = v.name.as_deref().unwrap_or(&v.quantity);
            let mut report = blank_report(&cfg.id, name, "rate");
            if sweep.all_below_floor(&v.quantity) {
                report.verdict = Verdict::SharpnessConfirmed;
                report.notes.push(format!(
                    "{} below the amplitude floor at every h",
                    v.quantity
                ));
            } else if let Some(fit) = &fit {
                apply_fit(&mut report, fit);
                if fit.alpha.is_finite() {
                    report.verdict = Verdict::Pass;
                } else {
                    report.notes.push("fitted rate is not finite".into());
                }
            } else {
                report
                    .notes
                    .push(format!("no usable rate fit for {}", v.quantity));
            }
            report
        }
    };
    let name = v.name.as_deref().unwrap_or(&v.quantity);
    report.experiment_id = format!("{}:{name}", cfg.id);
    apply_window(&mut report, v.alpha_min, v.alpha_max);
    Ok(report)
}

fn run_certify(
    cfg: &ExperimentConfig,
    section: &CertifySection,
    seed: u64,
    hash: &str,
) -> Result<ExperimentOutput, CliError> {
    let grid = section
        .domain
        .build(Resolution::Fixed(section.resolution.clone()))?;
    let region = grid.subregion(section.region.clone());
    let e_range = (section.e_range[0], section.e_range[1]);
    let gamma = match section.gamma {
        Some(g) => g,
        None => calibrate_gamma(
            &section.metric,
            &section.potential,
            &section.psi,
            &grid,
            &region,
            e_range,
            section.x_samples,
            section.xi_samples,
            section.c_target,
            seed,
        )?,
    };
    let certificate = certify_weight(
        &section.metric,
        &section.potential,
        &section.psi,
        gamma,
        &grid,
        &region,
        e_range,
        section.x_samples,
        section.xi_samples,
        section.c_target,
        seed,
    )?;

    let mut report = blank_report(&cfg.id, "certificate", "carleman-certify");
    report.constants.insert("gamma".into(), gamma);
    report
        .constants
        .insert("c_target".into(), section.c_target);
    if let Some(c_min) = certificate.c_min {
        report.constants.insert("c_min".into(), c_min);
    }
    if certificate.certified {
        report.verdict = Verdict::Pass;
    } else {
        report.notes.push(format!(
            "bracket minimum {:?} does not clear the target {}",
            certificate.c_min, section.c_target
        ));
    }
    if let Some([lo, hi]) = section.gamma_window {
        if !(gamma >= lo && gamma <= hi) {
            report.verdict = Verdict::Fail;
            report.notes.push(format!(
                "exponent {gamma} outside the acceptance window [{lo}, {hi}]"
            ));
        }
    }
    let certificates = json!({
        "kind": "carleman-weight",
        "psi": section.psi,
        "gamma": gamma,
        "region": section.region,
        "certificate": certificate,
    });
    Ok(ExperimentOutput {
        table: empty_table(&cfg.id, hash),
        verdicts: vec![report],
        certificates: Some(certificates),
        plots: Vec::new(),
    })
}

fn run_inequality(
    cfg: &ExperimentConfig,
    section: &InequalitySection,
    seed: u64,
    hash: &str,
) -> Result<ExperimentOutput, CliError> {
    let grid = Arc::new(
        section
            .domain
            .build(Resolution::Fixed(section.resolution.clone()))?,
    );
    let mut certificates = None;
    let mut certified = true;
    if let Some(cert_cfg) = &section.certify {
        let ScalarField::ExpOf { gamma, base } = &section.weight else {
            unreachable!("validated: certification requires an exp_of weight");
        };
        let region = grid.subregion(cert_cfg.region.clone());
        let certificate = certify_weight(
            &section.metric,
            &section.potential,
            base.as_ref(),
            *gamma,
            &grid,
            &region,
            (cert_cfg.e_range[0], cert_cfg.e_range[1]),
            cert_cfg.x_samples,
            cert_cfg.xi_samples,
            cert_cfg.c_target,
            seed,
        )?;
        certified = certificate.certified;
        certificates = Some(json!({
            "kind": "carleman-weight",
            "psi": base,
            "gamma": gamma,
            "region": cert_cfg.region,
            "certificate": certificate,
        }));
    }

    let rows = test_carleman_inequality(
        &grid,
        &section.metric,
        &section.potential,
        &section.weight,
        &section.gamma_piece,
        section.e_target,
        &section.h_list,
        section.n_samples,
        seed,
    )?;

    let mut report = blank_report(&cfg.id, "min-ratio", "carleman-inequality");
    let all_positive = rows.iter().all(|r| r.min_ratio > 0.0);
    let logs: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.min_ratio > 0.0)
        .map(|r| (r.h, r.min_ratio.ln()))
        .collect();
    let first = rows.first().expect("validated: non-empty h list");
    let last = rows.last().expect("validated: non-empty h list");
    report
        .constants
        .insert("min_ratio_coarsest".into(), first.min_ratio);
    report
        .constants
        .insert("min_ratio_finest".into(), last.min_ratio);
    match section.control {
        ControlKind::Positive => {
            let fit = fit_rate_from_logs(&logs)?;
            apply_fit(&mut report, &fit);
            let trend_ok = fit.alpha <= section.max_decay_rate;
            if !certified {
                report
                    .notes
                    .push("the weight failed certification before the table".into());
            }
            if !all_positive {
                report
                    .notes
                    .push("a minimum ratio reached zero or below".into());
            }
            if !trend_ok {
                report.notes.push(format!(
                    "minimum ratio decays at rate {:.4} > {}",
                    fit.alpha, section.max_decay_rate
                ));
            }
            if certified && all_positive && trend_ok {
                report.verdict = Verdict::Pass;
            }
        }
        ControlKind::Negative => {
            let collapse = first.min_ratio / last.min_ratio;
            report.constants.insert("collapse_factor".into(), collapse);
            if collapse >= section.min_collapse {
                report.verdict = Verdict::Pass;
                report.notes.push(format!(
                    "flat weight collapses the minimum ratio {collapse:.1}x from h={} to h={}",
                    first.h, last.h
                ));
            } else {
                report.notes.push(format!(
                    "collapse factor {collapse:.2} is below the required {}",
                    section.min_collapse
                ));
            }
        }
    }

    let table_rows: Vec<SweepRow> = rows
        .iter()
        .map(|r| {
            let mut quantities = BTreeMap::new();
            quantities.insert("min_ratio".to_string(), r.min_ratio);
            quantities.insert("max_ratio".to_string(), r.max_ratio);
            SweepRow {
                h: r.h,
                n_interior: grid.num_interior(),
                e: r.e,
                eigen_residual: 0.0,
                quantities,
                error: None,
            }
        })
        .collect();
    let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.min_ratio)).collect();
    Ok(ExperimentOutput {
        table: SweepResult {
            experiment_id: cfg.id.clone(),
            config_hash: hash.to_string(),
            rows: table_rows,
        },
        verdicts: vec![report],
        certificates,
        plots: vec![plot_from_series("min_ratio", "1/h", &series)],
    })
}

/// Both weights must grow outward through the observation component and
/// decay outward through every other one, at every boundary node.
fn boundary_signs_hold(report: &MorseReport, gamma: &str) -> bool {
    report.boundary_signs.iter().all(|s| {
        if s.piece == gamma {
            s.min > 0.0
        } else {
            s.max < 0.0
        }
    })
}

fn run_pair(
    cfg: &ExperimentConfig,
    section: &PairSection,
    seed: u64,
    hash: &str,
) -> Result<ExperimentOutput, CliError> {
    let grid = section
        .domain
        .build(Resolution::Fixed(section.resolution.clone()))?;
    let pair = make_compatible_pair(&grid, &section.gamma_piece, seed)?;
    let signs_ok = boundary_signs_hold(&pair.report1, &section.gamma_piece)
        && boundary_signs_hold(&pair.report2, &section.gamma_piece);

    let mut report = blank_report(&cfg.id, "compatible-pair", "compatible-pair");
    report.constants.insert(
        "critical_points_1".into(),
        pair.report1.critical_points.len() as f64,
    );
    report.constants.insert(
        "critical_points_2".into(),
        pair.report2.critical_points.len() as f64,
    );
    if pair.compatibility.vacuous {
        report
            .notes
            .push("neither weight has critical points; the condition held vacuously".into());
    }
    if pair.compatibility.pass && signs_ok {
        report.verdict = Verdict::Pass;
    } else if !signs_ok {
        report
            .notes
            .push("a boundary component carries the wrong normal-derivative sign".into());
    } else {
        report
            .notes
            .push("the weights do not cover each other's critical points".into());
    }
    let certificates = json!({
        "kind": "compatible-pair",
        "gamma_piece": section.gamma_piece,
        "pair": pair,
    });
    Ok(ExperimentOutput {
        table: empty_table(&cfg.id, hash),
        verdicts: vec![report],
        certificates: Some(certificates),
        plots: Vec::new(),
    })
}

fn run_rellich(
    cfg: &ExperimentConfig,
    section: &RellichSection,
    hash: &str,
) -> Result<ExperimentOutput, CliError> {
    let span = section.hi - section.lo;
    let k = (section.mode_k + 1) as f64;
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    for &n in &section.nodes {
        let grid = Grid::interval(section.lo, section.hi, Resolution::Fixed(vec![n]))?;
        let u: Vec<f64> = (0..grid.num_nodes())
            .map(|id| (k * PI * (grid.coords(id)[0] - section.lo) / span).sin())
            .collect();
        let rep = check_rellich(
            &grid,
            &MetricField::Identity,
            &ScalarField::Constant(0.0),
            section.h,
            &u,
            section.delta,
        )?;
        let mut quantities = BTreeMap::new();
        quantities.insert("rellich_gap".to_string(), rep.gap);
        quantities.insert("flux_ratio".to_string(), rep.flux_ratio);
        rows.push(SweepRow {
            h: section.h,
            n_interior: grid.num_interior(),
            e: (section.h * k * PI / span).powi(2),
            eigen_residual: 0.0,
            quantities,
            error: None,
        });
        gaps.push(rep.gap);
    }

    let mut report = blank_report(&cfg.id, "rellich", "rellich");
    report.constants.insert("gap_coarsest".into(), gaps[0]);
    report
        .constants
        .insert("gap_finest".into(), *gaps.last().expect("non-empty"));
    let mut pass = gaps[0] <= section.gap_tol;
    if !pass {
        report.notes.push(format!(
            "identity gap {:.4} exceeds {} at {} nodes",
            gaps[0], section.gap_tol, section.nodes[0]
        ));
    }
    if let Some(factor) = section.improvement_min {
        for pair in gaps.windows(2) {
            let improvement = pair[0] / pair[1];
            if !(improvement >= factor) {
                pass = false;
                report.notes.push(format!(
                    "gap improved only {improvement:.2}x on refinement (need {factor})"
                ));
            }
        }
    }
    if pass {
        report.verdict = Verdict::Pass;
    }
    let points: Vec<(f64, f64)> = section
        .nodes
        .iter()
        .zip(&gaps)
        .filter(|(_, g)| **g > 0.0)
        .map(|(n, g)| (*n as f64, g.ln()))
        .collect();
    Ok(ExperimentOutput {
        table: SweepResult {
            experiment_id: cfg.id.clone(),
            config_hash: hash.to_string(),
            rows,
        },
        verdicts: vec![report],
        certificates: None,
        plots: vec![PlotSeries {
            name: "rellich_gap".into(),
            x_label: "nodes".into(),
            y_label: "log gap".into(),
            points,
        }],
    })
}

fn run_zonal(
    cfg: &ExperimentConfig,
    section: &ZonalSection,
    seed: u64,
    hash: &str,
) -> Result<ExperimentOutput, CliError> {
    // Exact-vs-quadrature norm agreement, log-relative.
    let mut worst_gap: f64 = 0.0;
    for n in 0..=section.norm_max_n {
        let exact = zonal_norm_exact(n);
        let quad = zonal_norm_quadrature(n);
        worst_gap = worst_gap.max((exact - quad).abs() / exact.abs().max(1.0));
    }
    let n1_closed_form = (zonal_norm_exact(1).exp() - 8.0 * PI / 3.0).abs() / (8.0 * PI / 3.0);
    let mut norm_report = blank_report(&cfg.id, "norms", "zonal");
    norm_report
        .constants
        .insert("worst_log_relative_gap".into(), worst_gap);
    norm_report
        .constants
        .insert("n1_closed_form_gap".into(), n1_closed_form);
    if worst_gap <= section.norm_tol && n1_closed_form <= 1e-10 {
        norm_report.verdict = Verdict::Pass;
    } else {
        norm_report.notes.push(format!(
            "norm agreement {worst_gap:.3e} (tolerance {}) or n=1 closed form {n1_closed_form:.3e}",
            section.norm_tol
        ));
    }

    // Cap-mass decay rate in h = (n(n+1))^{-1/2}.
    let fit = zonal_rate_check(&section.n_list, section.s0)?;
    let mut rate_report = blank_report(&cfg.id, "cap-rate", "zonal");
    apply_fit(&mut rate_report, &fit);
    if fit.alpha >= section.alpha_min && fit.alpha <= section.alpha_max && !fit.concave {
        rate_report.verdict = Verdict::Pass;
    } else {
        rate_report.notes.push(format!(
            "fitted rate {:.4} outside [{}, {}] or concave ({})",
            fit.alpha, section.alpha_min, section.alpha_max, fit.concave
        ));
    }

    // Analytic eigenvalue relation away from the poles.
    let mut eigen_report = blank_report(&cfg.id, "eigen-relation", "zonal");
    let mut worst_eigen: f64 = 0.0;
    for &n in &section.eigen_ns {
        let err = verify_eigen_relation(n, section.eigen_samples, seed);
        eigen_report
            .constants
            .insert(format!("relative_error_n{n}"), err);
        worst_eigen = worst_eigen.max(err);
    }
    if worst_eigen <= section.eigen_tol {
        eigen_report.verdict = Verdict::Pass;
    } else {
        eigen_report.notes.push(format!(
            "eigenvalue relation error {worst_eigen:.3e} exceeds {}",
            section.eigen_tol
        ));
    }

    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &n in &section.n_list {
        let mode = ZonalMode::new(n);
        let h = 1.0 / (n as f64 * (n as f64 + 1.0)).sqrt();
        let log_ratio = 0.5 * (qmlab_core::zonal::cap_mass(n, section.s0) - mode.log_norm_sq);
        let mut quantities = BTreeMap::new();
        quantities.insert("cap_norm_ratio".to_string(), log_ratio.exp());
        rows.push(SweepRow {
            h,
            n_interior: 0,
            e: mode.eigenvalue,
            eigen_residual: 0.0,
            quantities,
            error: None,
        });
        points.push((1.0 / h, log_ratio));
    }
    Ok(ExperimentOutput {
        table: SweepResult {
            experiment_id: cfg.id.clone(),
            config_hash: hash.to_string(),
            rows,
        },
        verdicts: vec![norm_report, rate_report, eigen_report],
        certificates: None,
        plots: vec![PlotSeries {
            name: "cap_norm_ratio".into(),
            x_label: "1/h".into(),
            y_label: "log cap ratio".into(),
            points,
        }],
    })
}
