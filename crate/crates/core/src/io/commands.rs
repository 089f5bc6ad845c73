//! Library side of the command-line tool: each command reads and writes
//! files and returns what it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{load_gait, run_scenario, write_run, RunSummary};
use super::scenario::Scenario;
use crate::aslip::ASlipParams;
use crate::error::{Error, Result};
use crate::gait::{replay_report, synthesize_gait, GaitSpec, ReplayReport};
use crate::hlip::{p1_orbit, p2_orbit, s2s_matrices, HlipParams, P1Orbit, P2Orbit};
use crate::planner::{solve_plan, PlanProblem, PlanSolution};
use crate::SCHEMA_VERSION;

/// Steps replayed in place after a successful synthesis.
pub const REPLAY_STEPS: usize = 20;

/// Written next to every synthesized gait, also when synthesis fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitReport {
    pub schema_version: u32,
    pub spec: GaitSpec,
    pub aslip: ASlipParams,
    pub success: bool,
    pub failure: Option<String>,
    pub residual: Option<f64>,
    pub iterations: Option<usize>,
    pub cost: Option<f64>,
    pub hlip: Option<HlipParams>,
    pub oscillation: Option<f64>,
    pub replay: Option<ReplayReport>,
}

/// Synthesizes a gait, writes it to `out` and the report to `report`.
pub fn cmd_gait(
    spec: &GaitSpec,
    params: &ASlipParams,
    out: &Path,
    report: &Path,
) -> Result<GaitReport> {
    let mut r = GaitReport {
        schema_version: SCHEMA_VERSION,
        spec: *spec,
        aslip: *params,
        success: false,
        failure: None,
        residual: None,
        iterations: None,
        cost: None,
        hlip: None,
        oscillation: None,
        replay: None,
    };
    let outcome = synthesize_gait(spec, params).and_then(|found| {
        let replay = replay_report(&found.gait, params, REPLAY_STEPS)?;
        Ok((found, replay))
    });
    let result = match outcome {
        Ok((found, replay)) => {
            r.success = true;
            r.residual = Some(found.residual);
            r.iterations = Some(found.iterations);
            r.cost = Some(found.cost);
            r.hlip = Some(found.gait.hlip);
            r.oscillation = Some(found.gait.oscillation);
            r.replay = Some(replay);
            write_file(out, &found.gait.to_json()?)
        }
        Err(e) => {
            if let Error::SynthesisFailed { residual, .. } = &e {
                r.residual = Some(*residual);
            }
            r.failure = Some(e.to_string());
            Err(e)
        }
    };
    write_file(report, &serde_json::to_string_pretty(&r)?)?;
    result.map(|()| r)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Closed-form orbits and step-to-step matrices for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitReport {
    pub schema_version: u32,
    pub hlip: HlipParams,
    pub lambda: f64,
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub p1: P1Orbit,
    pub p2: P2Orbit,
}

pub fn cmd_orbit(hlip: &HlipParams, v_d: f64, u_left: f64) -> Result<OrbitReport> {
    let s2s = s2s_matrices(hlip)?;
    Ok(OrbitReport {
        schema_version: SCHEMA_VERSION,
        hlip: *hlip,
        lambda: hlip.lambda(),
        a: [
            [s2s.a[(0, 0)], s2s.a[(0, 1)]],
            [s2s.a[(1, 0)], s2s.a[(1, 1)]],
        ],
        b: [s2s.b[0], s2s.b[1]],
        p1: p1_orbit(hlip, v_d)?,
        p2: p2_orbit(hlip, v_d, u_left)?,
    })
}

pub fn read_plan_problem(path: &Path) -> Result<PlanProblem> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::InvalidParameter(format!("cannot read plan problem {}: {e}", path.display()))
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    crate::check_schema(&value)?;
    Ok(serde_json::from_value(value)?)
}

/// Solves a plan problem file and writes the solution JSON to `out`.
pub fn cmd_plan(problem: &Path, out: &Path) -> Result<PlanSolution> {
    let problem = read_plan_problem(problem)?;
    let solution = solve_plan(&problem)?;
    write_file(out, &serde_json::to_string_pretty(&solution)?)?;
    Ok(solution)
}

/// Output directory of a scenario: `out` if given, else the scenario's own
/// `output_dir`, else `runs/<name>`.
pub fn output_dir(scenario: &Scenario, out: Option<&Path>) -> PathBuf {
    match (out, &scenario.output_dir) {
        (Some(dir), _) => dir.to_path_buf(),
        (None, Some(dir)) => scenario.resolve(dir),
        (None, None) => Path::new("runs").join(&scenario.name),
    }
}

/// Runs a scenario and writes its outputs to `dir`. A walk that fails part
/// way still writes everything up to the failure and then returns the error.
pub fn cmd_simulate(scenario: &Scenario, dir: &Path, plots: bool) -> Result<RunSummary> {
    scenario.validate()?;
    let gait = load_gait(scenario)?;
    let output = run_scenario(scenario, &gait)?;
    write_run(&output, dir, plots)?;
    match output.failure {
        Some(e) => Err(e),
        None => Ok(output.summary),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn orbit_report_matches_closed_forms() {
        let hlip = HlipParams::new(1.0, 9.81, 0.3, 0.05).unwrap();
        let r = cmd_orbit(&hlip, 0.3, -0.3).unwrap();
        assert_relative_eq!(r.p1.v_star, hlip.sigma1() * r.p1.p_star, epsilon = 1e-12);
        assert_relative_eq!(
            r.p2.u_star_l + r.p2.u_star_r,
            2.0 * 0.3 * hlip.period(),
            epsilon = 1e-12
        );
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<OrbitReport>(&json).unwrap(), r);
    }

    #[test]
    fn invalid_spec_keeps_report() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GaitSpec {
            osc_amp: 0.5,
            ..GaitSpec::default()
        };
        let (out, report) = (dir.path().join("gait.json"), dir.path().join("report.json"));
        let err = cmd_gait(&spec, &ASlipParams::default(), &out, &report).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(!out.exists());
        let r: GaitReport = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
        assert!(!r.success && r.failure.is_some());
    }

    #[test]
    fn plan_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let hlip = HlipParams::new(1.0, 9.81, 0.3, 0.05).unwrap();
        let ext = crate::hlip::extend_s2s(&s2s_matrices(&hlip).unwrap());
        let problem = PlanProblem::single(
            ext,
            [0.0; 3],
            crate::planner::PlanTarget::Fixed([0.5, 0.0, 0.0]),
        );
        let path = dir.path().join("problem.json");
        fs::write(&path, serde_json::to_string(&problem).unwrap()).unwrap();
        let out = dir.path().join("solution.json");
        let solution = cmd_plan(&path, &out).unwrap();
        assert_eq!(solution.u_seq[0].len(), problem.horizon);
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.contains("\"status\": \"optimal\""));
    }

    #[test]
    fn plan_rejects_unknown_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("problem.json");
        fs::write(&path, r#"{"schema_version": 7}"#).unwrap();
        let err = cmd_plan(&path, &dir.path().join("s.json")).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }
}
