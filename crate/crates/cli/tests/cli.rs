//! End-to-end behavior of the `qmlab` binary (exit codes, artifacts, output
//! lines) and schema-level rejection of malformed configs through the
//! library entry points.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qmlab_cli::{load_config, CliError};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qmlab"))
}

fn bundled(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(file)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).expect("config writes");
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const ZONAL_FAST: &str = r#"
experiment = "zonal"
id = "fast-zonal"
seed = 3

[zonal]
n_list = [5, 10, 15, 20, 25, 30]
s0 = 0.36787944117144233
alpha_min = 0.85
alpha_max = 1.15
"#;

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(bundled("zonal_default.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("verdict spherical-cap-rates:norms: PASS"));
    assert!(text.contains("verdict spherical-cap-rates:cap-rate: PASS"));
    for file in ["results.csv", "results.json", "verdicts.json"] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="), "hash header: {csv}");
    assert!(csv.lines().nth(1).unwrap().starts_with("experiment_id,h,"));
}

#[test]
fn plots_are_self_contained_svg() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(bundled("rellich_sine.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let svg = std::fs::read_to_string(dir.path().join("plot_rellich_gap.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.trim_end().ends_with("</svg>"));
    // The only URI is the SVG namespace itself: no external fetches.
    assert_eq!(svg.matches("http").count(), 1);
    let dat = std::fs::read_to_string(dir.path().join("plot_rellich_gap.dat")).unwrap();
    assert!(dat.starts_with("# config_hash="));
}

#[test]
fn json_format_omits_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(bundled("zonal_default.toml"))
        .arg("--out")
        .arg(dir.path())
        .args(["--format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(!dir.path().join("results.csv").exists());
    assert!(dir.path().join("results.json").exists());
}

#[test]
fn failing_verdict_exits_one_but_keeps_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    // An impossible rate window turns the cap-rate verdict into FAIL.
    let config = ZONAL_FAST.replace("alpha_min = 0.85", "alpha_min = 5.0");
    let config = config.replace("alpha_max = 1.15", "alpha_max = 6.0");
    let path = write_config(dir.path(), &config);
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("cap-rate: FAIL"));
    let verdicts = std::fs::read_to_string(out_dir.join("verdicts.json")).unwrap();
    assert!(verdicts.contains("\"overall\": \"FAIL\""));
}

#[test]
fn schema_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // Missing the [zonal] section entirely.
    let path = write_config(dir.path(), "experiment = \"zonal\"\nid = \"broken\"\n");
    let out = bin()
        .args(["run", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("config schema"));

    // Unknown key inside a section.
    let config = ZONAL_FAST.replace("seed = 3", "seed = 3\nturbo = true");
    let path = write_config(dir.path(), &config);
    let out = bin()
        .args(["run", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("turbo"), "stderr: {}", stderr(&out));
}

#[test]
fn computation_errors_exit_three_and_leave_a_marker() {
    let dir = tempfile::tempdir().unwrap();
    // The observation window lies outside the domain: the sweep fails.
    let config = r#"
experiment = "sweep-theorem1"
id = "empty-window"

[sweep]
domain = { shape = "interval", lo = -1.0, hi = 1.0 }
h_list = [0.4, 0.3, 0.25, 0.2]
nodes_per_h = 8.0
e_rule = { rule = "track_index", k = 0 }

[[sweep.quantities]]
kind = "mass"
name = "nowhere"
region = { type = "box", params = { lo = [9.0], hi = [10.0] } }

[[verdict]]
kind = "theorem1"
quantity = "nowhere"
"#;
    let path = write_config(dir.path(), config);
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
    assert!(out_dir.join("error.json").exists());
}

#[test]
fn unreadable_config_exits_four() {
    let out = bin()
        .args(["run", "--config", "/nonexistent/qmlab.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("i/o"));
}

#[test]
fn verify_reports_named_checks() {
    let out = bin().arg("verify").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    for name in [
        "bracket-equivalence",
        "fit-oracle",
        "quadrature-zonal",
        "agmon-dijkstra",
        "rellich-closed-form",
    ] {
        assert!(text.contains(&format!("verify {name}: PASS")), "{name}");
    }
}

#[test]
fn injected_bracket_flip_fails_by_name() {
    let out = bin()
        .args(["verify", "--inject-bracket-sign-flip", "--filter", "bracket"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("verify bracket-equivalence: FAIL"));
}

#[test]
fn verify_filter_selects_a_subset() {
    let out = bin().args(["verify", "--filter", "zonal"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("quadrature-zonal"));
    assert!(!text.contains("bracket-equivalence"));
}

// Schema validation through the library, without spawning processes.

fn load_str(dir: &Path, text: &str) -> Result<qmlab_cli::LoadedConfig, CliError> {
    load_config(&write_config(dir, text))
}

fn expect_schema(dir: &Path, text: &str, needle: &str) {
    match load_str(dir, text) {
        Err(CliError::Schema(msg)) => {
            assert!(msg.contains(needle), "message {msg:?} lacks {needle:?}")
        }
        other => panic!("expected schema error containing {needle:?}, got {other:?}"),
    }
}

#[test]
fn section_must_match_the_experiment_kind() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{ZONAL_FAST}\n[pair]\ndomain = {{ shape = \"interval\", lo = 0.0, hi = 1.0 }}\nresolution = [11]\ngamma_piece = \"right\"\n"
    );
    expect_schema(dir.path(), &text, "does not belong");
}

#[test]
fn sweeps_demand_verdicts_on_measured_quantities() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#"
experiment = "sweep-theorem1"
id = "x"

[sweep]
domain = { shape = "interval", lo = -1.0, hi = 1.0 }
h_list = [0.4, 0.3, 0.25, 0.2]
nodes_per_h = 8.0
e_rule = { rule = "track_index", k = 0 }

[[sweep.quantities]]
kind = "residual"
name = "residual"
"#;
    expect_schema(dir.path(), base, "at least one [[verdict]]");

    let with_bad_quantity = format!(
        "{base}\n[[verdict]]\nkind = \"theorem1\"\nquantity = \"ghost\"\n"
    );
    expect_schema(dir.path(), &with_bad_quantity, "not measured");

    let with_bad_beta = format!(
        "{base}\n[[verdict]]\nkind = \"theorem1\"\nquantity = \"residual\"\nbeta = \"sharp\"\n"
    );
    expect_schema(dir.path(), &with_bad_beta, "beta");

    let with_bad_flag = format!(
        "{base}\n[[verdict]]\nkind = \"theorem1\"\nquantity = \"residual\"\nboundary_forbidden = true\n"
    );
    expect_schema(dir.path(), &with_bad_flag, "boundary_forbidden");

    let with_wrong_kind = format!(
        "{base}\n[[verdict]]\nkind = \"theorem2\"\nquantity = \"residual\"\n"
    );
    expect_schema(dir.path(), &with_wrong_kind, "does not match");
}

#[test]
fn inequality_controls_are_cross_checked() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#"
experiment = "carleman-inequality"
id = "x"

[inequality]
domain = { shape = "interval", lo = 0.0, hi = 1.0 }
resolution = [101]
weight = { type = "constant", params = 1.0 }
gamma_piece = "right"
e_target = 1.0
h_list = [0.4, 0.2, 0.1, 0.05]
n_samples = 2
control = "negative"
"#;
    // A negative control must not carry a certification request.
    let with_cert = format!(
        "{base}\n[inequality.certify]\ne_range = [0.5, 1.5]\nx_samples = 50\nxi_samples = 4\nc_target = 1.0\n"
    );
    expect_schema(dir.path(), &with_cert, "negative control");

    // A positive control needs enough h values for the trend fit.
    let short = base
        .replace("control = \"negative\"", "control = \"positive\"")
        .replace("h_list = [0.4, 0.2, 0.1, 0.05]", "h_list = [0.4, 0.2]");
    expect_schema(dir.path(), &short, "at least 4");

    // Zero samples can't build a table.
    let none = base.replace("n_samples = 2", "n_samples = 0");
    expect_schema(dir.path(), &none, "n_samples");
}

#[test]
fn zonal_bounds_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let short = ZONAL_FAST.replace("n_list = [5, 10, 15, 20, 25, 30]", "n_list = [5, 10]");
    expect_schema(dir.path(), &short, "at least 4");
    let bad_s0 = ZONAL_FAST.replace("s0 = 0.36787944117144233", "s0 = 1.5");
    expect_schema(dir.path(), &bad_s0, "s0");
}

#[test]
fn config_hash_is_stable_and_content_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let a = load_str(dir.path(), ZONAL_FAST).unwrap();
    let b = load_str(dir.path(), ZONAL_FAST).unwrap();
    assert_eq!(a.hash, b.hash);
    assert_eq!(a.hash.len(), 16);
    let c = load_str(dir.path(), &ZONAL_FAST.replace("seed = 3", "seed = 4")).unwrap();
    assert_ne!(a.hash, c.hash);
}

#[test]
fn bundled_configs_all_load() {
    for file in [
        "harmonic_t1.toml",
        "harmonic_t2.toml",
        "certify_square.toml",
        "inequality_unit.toml",
        "pair_strip.toml",
        "rellich_sine.toml",
        "zonal_default.toml",
    ] {
        load_config(&bundled(file)).unwrap_or_else(|e| panic!("{file}: {e}"));
    }
}
