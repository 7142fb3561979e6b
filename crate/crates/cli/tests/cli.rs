use std::fs;
use std::path::PathBuf;

use assert_cmd::Command;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn cqn() -> Command {
    let mut cmd = Command::cargo_bin("cqn").unwrap();
    cmd.env_remove("CQN_MAX_STATES");
    cmd
}

fn json_out(args: &[&str]) -> Value {
    let out = cqn().args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

#[test]
fn validate_exit_codes() {
    cqn().args(["validate", &path("example_one.json")]).assert().code(0);
    cqn().args(["validate", &path("unknown_key.json")]).assert().code(1);
    cqn().args(["validate", &path("bad_row_sum.json")]).assert().code(2);
    cqn().args(["validate", &path("bad_capacity.json")]).assert().code(2);
    cqn().args(["validate", &path("one_way_pair.json")]).assert().code(3);
    cqn().args(["validate", "/nonexistent/config.json"]).assert().code(1);
}

#[test]
fn usage_errors_exit_one() {
    cqn().args(["solve"]).assert().code(1);
    cqn().args(["frobnicate"]).assert().code(1);
    cqn().arg("--help").assert().code(0);
}

#[test]
fn violations_name_one_based_ids() {
    let out = cqn().args(["validate", &path("bad_row_sum.json")]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("violation"), "{text}");
    assert!(!text.contains("station 0"), "{text}");
}

#[test]
fn solve_reports_every_field() {
    let v = json_out(&["solve", &path("example_four_row1.json")]);
    for key in ["pi", "residual", "iterations", "logG", "report"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let pi: Vec<f64> = serde_json::from_value(v["pi"].clone()).unwrap();
    assert_eq!(pi.len(), 2);
    assert!(v["residual"].as_f64().unwrap() <= 1e-8);
    let report = &v["report"];
    let mean: f64 = report["mean_station"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum::<f64>()
        + report["mean_road"].as_array().unwrap().iter().map(|r| r["total"].as_f64().unwrap()).sum::<f64>();
    assert!((mean - 4.0).abs() < 1e-9);
    assert_eq!(report["mean_road"][0]["from"], 1);
}

#[test]
fn tolerance_flag_is_honoured() {
    let v = json_out(&["solve", &path("example_four_row1.json"), "--tol", "1e-10"]);
    assert!(v["residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn config_solver_section_is_used() {
    let v = json_out(&["solve", &path("example_map.json")]);
    assert!(v["residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn non_convergence_exits_four_with_best_iterate() {
    let out = cqn()
        .args(["solve", &path("example_four_row1.json"), "--max-iter", "2", "--tol", "1e-14"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("best iterate"));
}

#[test]
fn state_cap_exits_five() {
    cqn()
        .args(["solve", &path("example_four_row1.json"), "--max-states", "10"])
        .assert()
        .code(5);
    cqn()
        .args(["solve", &path("example_four_row1.json")])
        .env("CQN_MAX_STATES", "10")
        .assert()
        .code(5);
}

#[test]
fn bad_solver_settings_exit_one() {
    cqn()
        .args(["solve", &path("example_one.json"), "--damping", "1.5"])
        .assert()
        .code(1);
}

#[test]
fn seeded_simulation_is_reproducible() {
    let args = ["simulate", &path("example_one.json"), "--seed", "7", "--events", "30000", "--replications", "3"];
    let a = cqn().args(args).output().unwrap();
    let b = cqn().args(args).output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = cqn().args(["simulate", &path("example_one.json"), "--seed", "8", "--events", "30000", "--replications", "3"]).output().unwrap();
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn simulate_compare_reports_gaps() {
    let v = json_out(&["simulate", &path("example_one.json"), "--events", "50000", "--replications", "2", "--compare"]);
    let gaps = v["gaps"].as_array().unwrap();
    assert_eq!(gaps.len(), 2);
    let max = gaps.iter().map(|g| g["full_gap"].as_f64().unwrap()).fold(0.0, f64::max);
    assert_eq!(v["max_full_gap"].as_f64().unwrap(), max);
    assert!(v["simulation"]["full_prob"][0]["half_width"].is_number());
}

#[test]
fn echo_config_round_trips() {
    let out = cqn().args(["validate", &path("example_map.json"), "--echo-config"]).output().unwrap();
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let echoed = dir.path().join("echo.json");
    fs::write(&echoed, &out.stdout).unwrap();
    let again = cqn().args(["validate", echoed.to_str().unwrap(), "--echo-config"]).output().unwrap();
    assert_eq!(out.stdout, again.stdout);
    let a = json_out(&["solve", &path("example_map.json"), "--tol", "1e-12"]);
    let b = json_out(&["solve", echoed.to_str().unwrap(), "--tol", "1e-12"]);
    assert_eq!(a["pi"], b["pi"]);
}

#[test]
fn routing_and_marginal_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let routing = dir.path().join("p.csv");
    let marginals = dir.path().join("m.csv");
    let out = dir.path().join("out.json");
    cqn()
        .args(["solve", &path("example_three.json")])
        .args(["--dump-routing", routing.to_str().unwrap()])
        .args(["--marginals", marginals.to_str().unwrap()])
        .args(["--out", out.to_str().unwrap()])
        .assert()
        .code(0)
        .stdout("");
    let p = fs::read_to_string(&routing).unwrap();
    let rows: Vec<&str> = p.lines().collect();
    // 3 stations and 4 roads with two classes each, plus a header.
    assert_eq!(rows.len(), 1 + 3 + 8);
    for row in &rows[1..] {
        let sum: f64 = row.split(',').skip(1).map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-12, "{row}");
    }
    let m = fs::read_to_string(&marginals).unwrap();
    assert_eq!(m.lines().count(), 1 + 3 * 3);
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["pi"].is_array());
}

#[test]
fn report_formats() {
    let v = json_out(&["report", &path("example_two.json")]);
    let n = v["problematic"].as_f64().unwrap();
    assert!((0.0..=3.0).contains(&n));
    assert!((v["problematic_fraction"].as_f64().unwrap() - n / 3.0).abs() < 1e-15);
    let out = cqn().args(["report", &path("example_two.json"), "--format", "csv"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "station,empty_prob,full_prob,mean_bikes,pi");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn convention_flag_changes_the_answer() {
    let a = json_out(&["solve", &path("example_four_row1.json")]);
    let b = json_out(&["solve", &path("example_four_row1.json"), "--road-factor-convention", "bcmp"]);
    assert_ne!(a["pi"], b["pi"]);
    cqn()
        .args(["solve", &path("example_four_row1.json"), "--road-factor-convention", "nope"])
        .assert()
        .code(1);
}

#[test]
fn fixtures_match_expected_solutions() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/expected");
    let mut checked = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let entry = entry.unwrap().path();
        let expected: Value = serde_json::from_str(&fs::read_to_string(&entry).unwrap()).unwrap();
        let name = entry.file_name().unwrap().to_str().unwrap().to_owned();
        let tol = expected["tolerance"].as_f64().unwrap();
        let solver_tol = expected["solver_tol"].to_string();
        let got = json_out(&["solve", &path(&name), "--tol", &solver_tol]);
        for (g, w) in got["pi"].as_array().unwrap().iter().zip(expected["pi"].as_array().unwrap()) {
            let (g, w) = (g.as_f64().unwrap(), w.as_f64().unwrap());
            assert!((g - w).abs() <= tol, "{name}: {g} vs {w}");
        }
        let lg = (got["logG"].as_f64().unwrap() - expected["logG"].as_f64().unwrap()).abs();
        assert!(lg <= 1e-6, "{name}: logG drifted by {lg}");
        checked += 1;
    }
    assert!(checked >= 9);
}
