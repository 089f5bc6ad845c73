use std::fs;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::records::{write_steps_csv, StepRecord};
use super::scenario::{GainChoice, GaitSource, PathSource, PlannerConfig, Scenario, ScenarioKind};
use super::svg;
use crate::aslip::{simulate_walk_partial, FixedStep, PreImpact, Side, StepCommand, StepTrace};
use crate::error::{Error, Result};
use crate::gait::{synthesize_gait, GaitTrajectory};
use crate::hlip::{
    deadbeat_gain, extend_s2s, lqr_gain, p1_orbit, p2_orbit, s2s_matrices, ExtendedS2S, HlipParams,
    LinearS2S, LqrWeights, StepToStep, SteppingGain,
};
use crate::planner::{
    lateral_target, mpc_track, read_trajectory_csv, DesiredTrajectory, MpcTrack, PlanPlane,
    PlanProblem, PlanTarget, TerminalMode,
};
use crate::stepping::{
    compose_3d, Composition3D, PlaneReference, ReferenceMode, DEFAULT_MIN_FOOT_SEPARATION,
};
use crate::SCHEMA_VERSION;

/// Summary statistics of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub name: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub steps_requested: usize,
    pub steps_completed: usize,
    pub failure: Option<String>,
    pub hlip: HlipParams,
    /// State dimension of the stepping feedback per plane (2 or 3).
    pub plane_dims: [usize; 2],
    pub gains: [Vec<f64>; 2],
    pub u_max: f64,
    pub mean_velocity: [f64; 2],
    pub net_displacement: [f64; 2],
    pub final_position: [f64; 2],
    pub final_velocity: [f64; 2],
    pub height_mean: f64,
    pub height_min: f64,
    pub height_max: f64,
}

/// Everything produced by one scenario run.
#[derive(Debug)]
pub struct RunOutput {
    pub scenario: Scenario,
    pub traces: Vec<StepTrace>,
    pub records: Vec<StepRecord>,
    pub summary: RunSummary,
    pub composition: Option<Composition3D>,
    pub plan: Option<MpcTrack>,
    pub path: Option<DesiredTrajectory>,
    /// Error that stopped the walk early.
    pub failure: Option<Error>,
}

pub fn load_gait(scenario: &Scenario) -> Result<GaitTrajectory> {
    match &scenario.gait {
        GaitSource::File(p) => {
            let path = scenario.resolve(p);
            let text = fs::read_to_string(&path).map_err(|e| {
                Error::InvalidParameter(format!("cannot read gait {}: {e}", path.display()))
            })?;
            GaitTrajectory::from_json(&text)
        }
        GaitSource::Synthesize(spec) => Ok(synthesize_gait(spec, &scenario.aslip)?.gait),
    }
}

fn plane_gain<S: StepToStep + ?Sized>(
    choice: &GainChoice,
    axis: usize,
    map: &S,
) -> Result<SteppingGain> {
    match choice {
        GainChoice::Deadbeat => deadbeat_gain(map),
        GainChoice::Lqr { q, r } => {
            if q.len() != map.dim() {
                return Err(Error::InvalidParameter(format!(
                    "LQR weights of length {} for a {}-state plane",
                    q.len(),
                    map.dim()
                )));
            }
            lqr_gain(map, &LqrWeights::diagonal(q, *r))
        }
        GainChoice::Given { x, y } => Ok(SteppingGain::given(if axis == 0 { x } else { y })),
    }
}

/// H-LIP step-size planning for the planned scenarios; returns the two
/// plane references (starting at step 0 with the aSLIP's own state and
/// step) and the receding-horizon record.
fn planned_references<F>(
    scenario: &Scenario,
    ext: &ExtendedS2S,
    start: &PreImpact,
    planner: &PlannerConfig,
    desired: F,
) -> Result<(PlaneReference, PlaneReference, MpcTrack)>
where
    F: Fn(usize, usize) -> Result<[f64; 3]>,
{
    let x0 = [start.plane_extended(0), start.plane_extended(1)];
    let x1: Vec<[f64; 3]> = (0..2)
        .map(|j| ext.step3(&Vector3::from(x0[j]), start.u[j]).into())
        .collect();
    let plane = |j: usize, min_step: Option<f64>| PlanPlane {
        s2s: *ext,
        x0: x1[j],
        target: PlanTarget::Fixed([0.0; 3]),
        min_step,
    };
    let q = planner.q;
    let template = PlanProblem {
        schema_version: SCHEMA_VERSION,
        planes: vec![plane(0, None), plane(1, Some(planner.min_step))],
        horizon: planner.horizon,
        u_max: scenario.u_max,
        q: [q[0], 0.0, 0.0, 0.0, q[1], 0.0, 0.0, 0.0, q[2]],
        r: planner.r,
        terminal: TerminalMode::CostOnly,
        first_step: start.step_index + 1,
    };
    // Targets are evaluated once up front so errors surface here.
    let last = start.step_index + scenario.n_steps + planner.horizon + 1;
    let mut table = [Vec::with_capacity(last + 1), Vec::with_capacity(last + 1)];
    for (j, column) in table.iter_mut().enumerate() {
        for k in 0..=last {
            column.push(desired(j, k)?);
        }
    }
    let track = mpc_track(&template, |j, k| table[j][k.min(last)], scenario.n_steps)?;
    let mut refs = Vec::with_capacity(2);
    for j in 0..2 {
        let mut seq = track.planned(j);
        seq.start_index = start.step_index;
        seq.states.insert(0, x0[j].to_vec());
        seq.inputs.insert(0, start.u[j]);
        let gain = plane_gain(&scenario.gain, j, ext)?;
        refs.push(PlaneReference::new(ReferenceMode::Planned(seq), gain, ext)?);
    }
    let y = refs.pop().expect("two planes");
    let x = refs.pop().expect("two planes");
    Ok((x, y, track))
}

fn side_of(k: usize) -> Side {
    Side::for_step(k)
}

struct Controller {
    composition: Option<Composition3D>,
    plan: Option<MpcTrack>,
    path: Option<DesiredTrajectory>,
}

fn build_controller(
    scenario: &Scenario,
    gait: &GaitTrajectory,
    start: &PreImpact,
) -> Result<Controller> {
    let hlip = gait.hlip;
    let s2s = s2s_matrices(&hlip)?;
    let ext = extend_s2s(&s2s);
    let period = hlip.period();
    let orbit_plane = |mode: ReferenceMode, axis: usize| -> Result<PlaneReference> {
        PlaneReference::new(mode, plane_gain(&scenario.gain, axis, &s2s)?, &s2s)
    };
    let mut out = Controller {
        composition: None,
        plan: None,
        path: None,
    };
    match scenario.kind {
        ScenarioKind::Periodic3d => {
            let cfg = scenario.periodic.as_ref().expect("validated");
            let x_mode = match cfg.composition {
                crate::stepping::CompositionKind::P2P2 => ReferenceMode::P2(p2_orbit(
                    &hlip,
                    cfg.v_x,
                    cfg.u_left_x.unwrap_or(cfg.v_x * period),
                )?),
                _ => ReferenceMode::P1(p1_orbit(&hlip, cfg.v_x)?),
            };
            let y_mode = ReferenceMode::P2(p2_orbit(&hlip, cfg.v_y, cfg.u_left_y)?);
            out.composition = Some(
                compose_3d(
                    orbit_plane(x_mode, 0)?,
                    orbit_plane(y_mode, 1)?,
                    DEFAULT_MIN_FOOT_SEPARATION,
                )?
                .with_u_max(scenario.u_max),
            );
        }
        ScenarioKind::SteppingInPlace => {
            let cfg = scenario.stepping_in_place.as_ref().expect("validated");
            if cfg.controller {
                let x = orbit_plane(ReferenceMode::P1(p1_orbit(&hlip, 0.0)?), 0)?;
                let y = orbit_plane(ReferenceMode::P2(p2_orbit(&hlip, 0.0, -0.3)?), 1)?;
                out.composition =
                    Some(compose_3d(x, y, DEFAULT_MIN_FOOT_SEPARATION)?.with_u_max(scenario.u_max));
            }
        }
        ScenarioKind::FixedLocation => {
            let cfg = scenario.fixed_location.as_ref().expect("validated");
            let planner = &cfg.planner;
            let target = cfg.target;
            let (x, y, track) = planned_references(scenario, &ext, start, planner, |j, k| {
                if j == 0 {
                    Ok([target[0], 0.0, 0.0])
                } else {
                    lateral_target(&hlip, target[1], 0.0, planner.step_width, side_of(k))
                }
            })?;
            out.composition = Some(compose_3d(x, y, 0.0)?.with_u_max(scenario.u_max));
            out.plan = Some(track);
        }
        ScenarioKind::TrajectoryTracking => {
            let cfg = scenario.trajectory.as_ref().expect("validated");
            let planner = &cfg.planner;
            let path = match &cfg.path {
                PathSource::Csv(p) => {
                    let file = fs::File::open(scenario.resolve(p))?;
                    read_trajectory_csv(file)?
                }
                PathSource::Sinusoid {
                    v_x,
                    amplitude,
                    period: wave,
                } => {
                    let duration = (scenario.n_steps + planner.horizon + 2) as f64 * period;
                    DesiredTrajectory::sinusoid(*v_x, *amplitude, *wave, duration, 0.01)?
                }
            };
            let origin = [start.global[0], 0.0];
            let t0 = start.step_index;
            let (x, y, track) = planned_references(scenario, &ext, start, planner, |j, k| {
                let t = (k.saturating_sub(t0)) as f64 * period;
                if j == 0 {
                    let mut x = path.extended_target(&hlip, 0, t);
                    x[0] += origin[0];
                    Ok(x)
                } else {
                    let c = path.position(t)[1] + origin[1];
                    lateral_target(
                        &hlip,
                        c,
                        path.velocity(t)[1],
                        planner.step_width,
                        side_of(k),
                    )
                }
            })?;
            out.composition = Some(compose_3d(x, y, 0.0)?.with_u_max(scenario.u_max));
            out.plan = Some(track);
            out.path = Some(path);
        }
    }
    Ok(out)
}

fn records(
    traces: &[StepTrace],
    composition: Option<&Composition3D>,
    s2s: &LinearS2S,
) -> Vec<StepRecord> {
    let mut snaps: Vec<PreImpact> = traces.iter().map(|t| t.start).collect();
    if let Some(end) = traces.last().and_then(|t| t.end) {
        snaps.push(end);
    }
    snaps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let reference = composition.and_then(|c| c.reference_at(s.step_index).ok());
            let get = |axis: usize, idx: usize| -> Option<f64> {
                let (states, _) = reference.as_ref()?;
                let x = &states[axis];
                // Orbit references carry [p, v]; planned ones [x, p, v].
                match (x.len(), idx) {
                    (2, 0) => None,
                    (2, i) => Some(x[i - 1]),
                    (_, i) => Some(x[i]),
                }
            };
            let w = snaps.get(i + 1).map(|next| {
                let mut w = [0.0; 4];
                for axis in 0..2 {
                    let x = Vector2::from(s.plane(axis));
                    let n = Vector2::from(next.plane(axis));
                    let d = n - s2s.step2(&x, s.u[axis]);
                    w[2 * axis] = d[0];
                    w[2 * axis + 1] = d[1];
                }
                w
            });
            StepRecord {
                k: s.step_index,
                t: s.time,
                stance: match s.stance {
                    Side::Left => 'L',
                    Side::Right => 'R',
                },
                x: s.global[0],
                p_x: s.x[0],
                v_x: s.x[1],
                y: s.global[1],
                p_y: s.x[2],
                v_y: s.x[3],
                z: s.height,
                u_x: s.u[0],
                u_y: s.u[1],
                ref_x: get(0, 0),
                ref_p_x: get(0, 1),
                ref_v_x: get(0, 2),
                ref_y: get(1, 0),
                ref_p_y: get(1, 1),
                ref_v_y: get(1, 2),
                ref_u_x: reference.as_ref().map(|r| r.1[0]),
                ref_u_y: reference.as_ref().map(|r| r.1[1]),
                w_p_x: w.map(|w| w[0]),
                w_v_x: w.map(|w| w[1]),
                w_p_y: w.map(|w| w[2]),
                w_v_y: w.map(|w| w[3]),
            }
        })
        .collect()
}

fn summarize(
    scenario: &Scenario,
    hlip: &HlipParams,
    traces: &[StepTrace],
    composition: Option<&Composition3D>,
    failure: Option<&Error>,
) -> RunSummary {
    let first = traces.first().map(|t| t.start);
    let last = traces.iter().rev().find_map(|t| t.end).or(first);
    let (mean_velocity, net, final_position, final_velocity) = match (first, last) {
        (Some(a), Some(b)) => {
            let dt = (b.time - a.time).max(f64::MIN_POSITIVE);
            let d = [b.global[0] - a.global[0], b.global[1] - a.global[1]];
            ([d[0] / dt, d[1] / dt], d, b.global, [b.x[1], b.x[3]])
        }
        _ => ([0.0; 2], [0.0; 2], [0.0; 2], [0.0; 2]),
    };
    let heights: Vec<f64> = traces
        .iter()
        .flat_map(|t| t.samples.iter().map(|s| s.pos[2]))
        .collect();
    let n = heights.len().max(1) as f64;
    let (dims, gains) = match composition {
        Some(c) => (
            [c.x_plane.dim(), c.y_plane.dim()],
            [c.x_plane.gain.k.clone(), c.y_plane.gain.k.clone()],
        ),
        None => ([2, 2], [vec![0.0; 2], vec![0.0; 2]]),
    };
    RunSummary {
        schema_version: SCHEMA_VERSION,
        name: scenario.name.clone(),
        kind: scenario.kind,
        seed: scenario.seed,
        steps_requested: scenario.n_steps,
        steps_completed: traces.iter().filter(|t| t.end.is_some()).count(),
        failure: failure.map(|e| e.to_string()),
        hlip: *hlip,
        plane_dims: dims,
        gains,
        u_max: scenario.u_max,
        mean_velocity,
        net_displacement: net,
        final_position,
        final_velocity,
        height_mean: heights.iter().sum::<f64>() / n,
        height_min: heights.iter().copied().fold(f64::INFINITY, f64::min),
        height_max: heights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Runs a validated scenario on a loaded gait. A walk that stops early is
/// not an error here; it is reported in `failure` with the completed steps
/// and the partial trace of the failing one.
pub fn run_scenario(scenario: &Scenario, gait: &GaitTrajectory) -> Result<RunOutput> {
    scenario.validate()?;
    let initial = gait.initial_at([0.0, 0.0]);
    let start = PreImpact::from_state(&initial);
    let controller = build_controller(scenario, gait, &start)?;
    let zero = FixedStep([0.0, 0.0]);
    let command: &dyn StepCommand = match &controller.composition {
        Some(c) => c,
        None => &zero,
    };
    let (mut traces, failure) =
        simulate_walk_partial(&initial, gait, &scenario.aslip, command, scenario.n_steps);
    let failure = failure.map(|e| match e {
        Error::StepFailure {
            step,
            reason,
            partial,
        } => {
            traces.push(*partial);
            Error::StepFailure {
                step,
                reason,
                partial: Box::new(traces.last().expect("just pushed").clone()),
            }
        }
        other => other,
    });
    let s2s = s2s_matrices(&gait.hlip)?;
    let records = records(&traces, controller.composition.as_ref(), &s2s);
    let summary = summarize(
        scenario,
        &gait.hlip,
        &traces,
        controller.composition.as_ref(),
        failure.as_ref(),
    );
    Ok(RunOutput {
        scenario: scenario.clone(),
        traces,
        records,
        summary,
        composition: controller.composition,
        plan: controller.plan,
        path: controller.path,
        failure,
    })
}

/// Writes `scenario.json`, `steps.csv`, `trace.csv`, `summary.json`, the
/// plan (planned scenarios) and, with `plots`, SVG figures into `dir`.
pub fn write_run(output: &RunOutput, dir: &Path, plots: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("scenario.json"), output.scenario.to_json()?)?;
    let mut steps = Vec::new();
    write_steps_csv(&output.records, &mut steps)?;
    fs::write(dir.join("steps.csv"), steps)?;
    let mut trace = Vec::new();
    crate::aslip::write_trace_csv(&output.traces, output.scenario.trace_stride, &mut trace)?;
    fs::write(dir.join("trace.csv"), trace)?;
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&output.summary)?,
    )?;
    if let Some(plan) = &output.plan {
        fs::write(dir.join("plan.json"), serde_json::to_string_pretty(plan)?)?;
    }
    if plots {
        for axis in 0..2 {
            let name = if axis == 0 {
                "phase_x.svg"
            } else {
                "phase_y.svg"
            };
            fs::write(dir.join(name), svg::phase_portrait(&output.traces, axis))?;
        }
        fs::write(
            dir.join("path.svg"),
            svg::top_view(&output.records, output.path.as_ref()),
        )?;
        fs::write(dir.join("height.svg"), svg::height_series(&output.traces))?;
    }
    Ok(())
}
