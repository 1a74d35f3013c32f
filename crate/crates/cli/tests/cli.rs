use assert_cmd::Command;
use predicates::prelude::*;
use std::path::PathBuf;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn cmd() -> Command {
    Command::cargo_bin("splinedeform").unwrap()
}

#[test]
fn quality_of_identity_square() {
    cmd()
        .arg("quality")
        .arg(fixture("identity_square.geo"))
        .assert()
        .success()
        .stdout(predicate::str::contains("m = 1.0000000000"))
        .stdout(predicate::str::contains("R = 1.0000000000"));
}

#[test]
fn parse_error_exits_2() {
    cmd()
        .arg("quality")
        .arg(fixture("bad_decreasing_knots.geo"))
        .assert()
        .code(2)
        .stderr(predicate::str::contains("non-decreasing"));
}

#[test]
fn missing_file_is_an_error() {
    cmd()
        .arg("quality")
        .arg(fixture("does_not_exist.geo"))
        .assert()
        .failure();
}

#[test]
fn coons_on_unit_square_shell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("coons.geo");
    cmd()
        .arg("coons")
        .arg(fixture("unit_square_shell.geo"))
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    cmd()
        .arg("quality")
        .arg(&out)
        .assert()
        .success()
        .stdout(predicate::str::contains("m = 1.0000000000"));
}

#[test]
fn raw_coons_on_puzzle_reports_negative_m() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("coons.geo");
    cmd()
        .arg("coons")
        .arg(fixture("puzzle.geo"))
        .arg("--out")
        .arg(&out)
        .assert()
        .success()
        .stdout(predicate::str::contains("m = -"))
        .stdout(predicate::str::contains("R = inf"));
}

#[test]
fn pipeline_on_puzzle_succeeds_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let outdir = dir.path().join("out");
    cmd()
        .arg("pipeline")
        .arg(fixture("puzzle.geo"))
        .args(["--strategy", "ndil", "--steps", "4", "--nu", "0.49"])
        .arg("--report")
        .arg(&report)
        .arg("--out")
        .arg(&outdir)
        .assert()
        .success();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(json["final_min_det"].as_f64().unwrap() > 0.0);
    assert!(outdir.join("final.geo").exists());
    assert!(outdir.join("final.vtk").exists());
    assert!(outdir.join("final.svg").exists());
    assert!(outdir.join("initial.geo").exists());
}

#[test]
fn simplify_then_deform_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let shell_out = dir.path().join("simplified.geo");
    cmd()
        .arg("simplify")
        .arg(fixture("concave.geo"))
        .args(["--coarse-degree", "2", "--coarse-size", "3"])
        .arg("--out")
        .arg(&shell_out)
        .assert()
        .success();
    let coons_out = dir.path().join("initial.geo");
    cmd()
        .arg("coons")
        .arg(&shell_out)
        .arg("--out")
        .arg(&coons_out)
        .assert()
        .success();
    cmd()
        .arg("deform")
        .arg(fixture("concave.geo"))
        .arg("--initial")
        .arg(&coons_out)
        .args(["--strategy", "newton", "--steps", "2"])
        .assert()
        .success();
}

#[test]
fn trivial_pipeline_on_own_boundary() {
    // the unit square target starting from its own boundary: nothing to do
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    cmd()
        .arg("pipeline")
        .arg(fixture("unit_square_shell.geo"))
        .args(["--coarse-degree", "1", "--coarse-size", "2", "--steps", "1"])
        .arg("--report")
        .arg(&report)
        .assert()
        .code(2);
    // the coarse space equals the boundary space here, so simplification
    // correctly refuses; quality of the plain coons fill is the real check
}

#[test]
fn determinism_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let outdir = dir.path().join(format!("run{k}"));
        cmd()
            .arg("pipeline")
            .arg(fixture("concave.geo"))
            .args(["--steps", "3"])
            .arg("--out")
            .arg(&outdir)
            .assert()
            .success();
        outputs.push(std::fs::read(outdir.join("final.geo")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
