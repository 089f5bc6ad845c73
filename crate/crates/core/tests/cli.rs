mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use slipwalk::hlip::{extend_s2s, s2s_matrices, HlipParams};
use slipwalk::planner::{PlanProblem, PlanTarget, TerminalMode};

fn slipwalk(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slipwalk"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn scenario(name: &str) -> String {
    common::scenarios_dir()
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn plan_problem(dir: &Path, target: f64, horizon: usize) -> String {
    let h = HlipParams::new(1.0, 9.81, 0.3, 0.05).unwrap();
    let mut p = PlanProblem::single(
        extend_s2s(&s2s_matrices(&h).unwrap()),
        [0.0; 3],
        PlanTarget::Fixed([target, 0.0, 0.0]),
    );
    p.terminal = TerminalMode::Equality;
    p.horizon = horizon;
    let path = dir.join("problem.json");
    fs::write(&path, serde_json::to_string(&p).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn orbit_prints_both_orbits() {
    let dir = tempfile::tempdir().unwrap();
    let out = slipwalk(&["orbit", "--v", "0.2", "--u-left", "-0.25"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["p2"]["u_star_l"], -0.25);
    assert!(report["p1"]["p_star"].as_f64().unwrap() > 0.0);
}

#[test]
fn orbit_rejects_bad_height() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&slipwalk(&["orbit", "--z0", "-1"], dir.path())), 2);
}

#[test]
fn gait_rejects_oversized_oscillation() {
    let dir = tempfile::tempdir().unwrap();
    let out = slipwalk(&["gait", "--osc-amp", "0.5"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("gait.json").exists());
    assert!(dir.path().join("gait.report.json").exists());
}

#[test]
fn plan_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(
        code(&slipwalk(&["plan", missing.to_str().unwrap()], dir.path())),
        2
    );

    let reachable = plan_problem(dir.path(), 1.0, 10);
    let out = slipwalk(&["plan", &reachable], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("solution.json").exists());

    let unreachable = plan_problem(dir.path(), 5.0, 2);
    assert_eq!(code(&slipwalk(&["plan", &unreachable], dir.path())), 3);
}

#[test]
fn analyze_needs_a_run() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&slipwalk(&["analyze", "."], dir.path())), 2);
}

#[test]
fn simulate_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = slipwalk(
        &[
            "simulate",
            &scenario("periodic_3d.json"),
            "--steps",
            "12",
            "--out",
            run.to_str().unwrap(),
            "--svg",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["trace.csv", "steps.csv"] {
        assert!(run.join(file).exists(), "{file}");
    }
    let out = slipwalk(&["analyze", run.to_str().unwrap()], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("plane"));
}

#[test]
fn batch_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let names = ["stepping_in_place.json", "fixed_location.json"];
    let run = |out: &str| {
        let mut args = vec!["simulate".to_string()];
        args.extend(names.iter().map(|n| scenario(n)));
        args.extend(["--steps", "8", "--batch", "--out", out].map(String::from));
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = slipwalk(&args, dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("a");
    run("b");
    for name in ["stepping-in-place", "fixed-location"] {
        for file in ["trace.csv", "steps.csv"] {
            let a = fs::read(dir.path().join("a").join(name).join(file)).unwrap();
            let b = fs::read(dir.path().join("b").join(name).join(file)).unwrap();
            assert!(a == b, "{name}/{file} differs between runs");
        }
    }
}

#[test]
fn simulate_reports_the_worst_failure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = slipwalk(
        &[
            "simulate",
            &scenario("stepping_in_place.json"),
            missing.to_str().unwrap(),
            "--steps",
            "2",
            "--out",
            "runs",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));
    assert!(dir.path().join("runs/stepping-in-place/steps.csv").exists());
}
