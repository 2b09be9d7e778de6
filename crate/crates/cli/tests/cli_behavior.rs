//! Black-box tests of the command-line contract: exit codes, report
//! shapes, override flags, and output handling.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_holonomy-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Shipped sample configs live at the workspace root, not the crate root.
fn shipped(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn catalog_list_names_every_entry() {
    let out = run(&["catalog", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in [
        "flat-r2",
        "flat-r3",
        "sphere-s2",
        "sphere-s2-scaled",
        "hyperbolic-h2",
        "cone-circle",
        "cone-sphere",
        "product-cone-cone",
        "product-flat-sphere",
        "paraboloid",
    ] {
        assert!(text.contains(name), "catalog list is missing {name}");
    }
}

#[test]
fn holonomy_report_has_affine_wire_shape() {
    let out = run(&["holonomy", &shipped("equator-holonomy.json"), "--no-meta"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!(v.get("meta").is_none(), "--no-meta must drop the meta block");
    let sample = &v["report"];
    let a = sample["element"]["A"].as_array().expect("A is an array of rows");
    assert_eq!(a.len(), 2);
    assert_eq!(a[0].as_array().unwrap().len(), 2);
    assert_eq!(sample["element"]["b"].as_array().unwrap().len(), 2);
    let arc = sample["arc_length"].as_f64().unwrap();
    assert!((arc - 2.0 * std::f64::consts::PI).abs() < 1e-6, "arc {arc}");
}

#[test]
fn meta_block_present_by_default() {
    let out = run(&["holonomy", &shipped("equator-holonomy.json")]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["meta"]["version"], env!("CARGO_PKG_VERSION"));
    assert!(v["meta"]["timestamp"].is_number());
}

#[test]
fn unknown_manifold_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"manifold": "klein-bottle", "protocol": {"seed": 1}}"#,
    );
    let out = run(&["classify", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown catalog entry"), "stderr: {err}");
}

#[test]
fn malformed_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "broken.json", "{ not json");
    let out = run(&["classify", &cfg]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_exits_two() {
    let out = run(&["classify", "/no/such/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn holonomy_without_curve_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "nocurve.json", r#"{"manifold": "flat-r2"}"#);
    let out = run(&["holonomy", &cfg]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn classify_needs_seed_then_accepts_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "flat.json", r#"{"manifold": "flat-r2"}"#);
    let out = run(&["classify", &cfg]);
    assert_eq!(out.status.code(), Some(2), "sampling without a seed");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--seed"), "stderr should point at --seed: {err}");

    let out = run(&["classify", &cfg, "--seed", "7", "--no-meta"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["report"]["overall"], "TRIVIAL");
}

#[test]
fn cone_check_on_sphere_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sphere.json",
        r#"{"manifold": "sphere-s2", "protocol": {"seed": 3, "n_polygons": 6}}"#,
    );
    let out = run(&["cone-check", &cfg]);
    assert_eq!(out.status.code(), Some(1), "no fixed point is a numerical refusal");
    let err = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(err.contains("fixed point"), "stderr: {err}");
}

#[test]
fn out_flag_writes_file_and_keeps_stdout_quiet() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("report.json");
    let out = run(&[
        "holonomy",
        &shipped("equator-holonomy.json"),
        "--no-meta",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty(), "report must go to the file only");
    let text = std::fs::read_to_string(&target).unwrap();
    assert!(text.ends_with('\n'));
    let _: Value = serde_json::from_str(&text).unwrap();
}

#[test]
fn out_flag_unwritable_path_exits_two() {
    let out = run(&[
        "holonomy",
        &shipped("equator-holonomy.json"),
        "--out",
        "/no/such/dir/report.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tol_file_replaces_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "loop.json",
        r#"{"manifold": "flat-r2", "curve": {"type": "rectangle", "i": 0, "j": 1, "scale": 0.3}}"#,
    );
    let out = run(&["holonomy", &cfg, "--no-meta"]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["step"].as_f64(), Some(1e-3));

    let tols = write_config(dir.path(), "tols.json", r#"{"rk4_step": 5e-3}"#);
    let out = run(&["holonomy", &cfg, "--no-meta", "--tol-file", &tols]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["step"].as_f64(), Some(5e-3));
    assert_eq!(v["tolerances"]["rk4_step"].as_f64(), Some(5e-3));
}

#[test]
fn invalid_tolerances_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "loop.json",
        r#"{"manifold": "flat-r2", "curve": {"type": "rectangle", "i": 0, "j": 1, "scale": 0.3}}"#,
    );
    for body in [r#"{"rk4_step": -1.0}"#, r#"{"no_such_knob": 1.0}"#] {
        let tols = write_config(dir.path(), "tols.json", body);
        let out = run(&["holonomy", &cfg, "--no-meta", "--tol-file", &tols]);
        assert_eq!(out.status.code(), Some(2), "tolerance body {body}");
    }
}

#[test]
fn develop_emits_csv_trace() {
    let out = run(&["develop", &shipped("hyperbolic-develop.json")]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,dev_1,dev_2,pos_1,pos_2"));
    let mut prev_t = f64::NEG_INFINITY;
    let mut rows = 0usize;
    for line in lines {
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.parse().expect("numeric CSV field"))
            .collect();
        assert_eq!(fields.len(), 5, "row {line:?}");
        assert!(fields[0] > prev_t, "arc column must increase");
        prev_t = fields[0];
        rows += 1;
    }
    assert!(rows > 10, "only {rows} rows");
}

#[test]
fn verify_list_prints_stable_ledger() {
    let first = run(&["verify", "--list"]);
    assert!(first.status.success());
    let text = String::from_utf8_lossy(&first.stdout);
    for name in [
        "flat-triviality",
        "product-splitting",
        "factor-dichotomy",
        "compactness-cones",
        "einstein-semidirect",
        "unbounded-translation",
        "radial-field-identity",
        "homothety-law",
        "curvature-nullity",
        "product-action",
        "bundle-maps",
    ] {
        assert!(text.contains(name), "ledger is missing {name}");
    }
    let second = run(&["verify", "--list"]);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn verify_scoped_to_one_manifold_skips_the_rest() {
    let out = run(&["verify", &shipped("flat-classify.json"), "--no-meta"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["selection"], "flat-r3");
    assert_eq!(v["counts"]["fail"].as_u64(), Some(0));
    assert!(v["counts"]["skip"].as_u64().unwrap() >= 9);
    let checks = v["checks"].as_array().unwrap();
    let flat = checks
        .iter()
        .find(|c| c["name"] == "flat-triviality")
        .expect("flat-triviality present");
    assert_eq!(flat["status"], "PASS");
    assert!(checks.iter().any(|c| c["status"] == "SKIP"));
}

#[test]
fn closed_stdout_pipe_ends_run_quietly() {
    use std::io::Read;
    // The CSV trace exceeds the OS pipe buffer, so dropping the read end
    // mid-stream forces a broken-pipe write inside the binary.
    let mut child = bin()
        .args(["develop", &shipped("hyperbolic-develop.json")])
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut header = [0u8; 8];
    child
        .stdout
        .as_mut()
        .unwrap()
        .read_exact(&mut header)
        .unwrap();
    drop(child.stdout.take());
    let status = child.wait().unwrap();
    assert!(status.success(), "exited with {:?}", status.code());
    let mut err = String::new();
    child
        .stderr
        .as_mut()
        .unwrap()
        .read_to_string(&mut err)
        .unwrap();
    assert!(!err.contains("panicked"), "stderr: {err}");
}

#[test]
fn verify_requires_config_or_all() {
    let out = run(&["verify"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}
