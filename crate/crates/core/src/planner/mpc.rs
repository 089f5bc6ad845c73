use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{solve_plan, PlanProblem, PlanSolution, PlanTarget};
use crate::error::Result;
use crate::stepping::PlannedSequence;

/// H-LIP reference emitted at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcStep {
    pub step: usize,
    /// Extended H-LIP state per plane.
    pub x_hlip: Vec<[f64; 3]>,
    /// First planned input per plane.
    pub u_hlip: Vec<f64>,
    /// False when the replan failed and the shifted previous plan was used.
    pub replanned: bool,
    /// Plan cost; absent on fallback steps.
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcTrack {
    pub steps: Vec<MpcStep>,
}

impl MpcTrack {
    /// The reference of one plane, for the stepping controller.
    pub fn planned(&self, plane: usize) -> PlannedSequence {
        PlannedSequence {
            start_index: self.steps.first().map_or(0, |s| s.step),
            states: self
                .steps
                .iter()
                .map(|s| s.x_hlip[plane].to_vec())
                .collect(),
            inputs: self.steps.iter().map(|s| s.u_hlip[plane]).collect(),
        }
    }

    pub fn fallbacks(&self) -> usize {
        self.steps.iter().filter(|s| !s.replanned).count()
    }
}

/// Receding-horizon planning on the H-LIP.
///
/// Starts from the template's `x0` at step `template.first_step`. At every
/// step the plan is solved over the targets `desired(plane, k + 1 ..= k + N)`,
/// the first input is applied to the H-LIP and the state advanced exactly.
/// If a replan fails, the previous plan shifted by one step is used; the
/// error is returned only when no previous plan is left.
pub fn mpc_track<F>(template: &PlanProblem, desired: F, n_steps: usize) -> Result<MpcTrack>
where
    F: Fn(usize, usize) -> [f64; 3],
{
    template.validate()?;
    let n = template.horizon;
    let mut problem = template.clone();
    let mut state: Vec<Vector3<f64>> = template
        .planes
        .iter()
        .map(|p| Vector3::from(p.x0))
        .collect();
    let mut previous: Option<(PlanSolution, usize)> = None;
    let mut steps = Vec::with_capacity(n_steps);

    for i in 0..n_steps {
        let k = template.first_step + i;
        problem.first_step = k;
        for (j, plane) in problem.planes.iter_mut().enumerate() {
            plane.x0 = state[j].into();
            plane.target = PlanTarget::Sampled((k + 1..=k + n).map(|s| desired(j, s)).collect());
        }
        let (u, objective, replanned) = match solve_plan(&problem) {
            Ok(sol) => {
                let u: Vec<f64> = sol.u_seq.iter().map(|u| u[0]).collect();
                let objective = Some(sol.objective);
                previous = Some((sol, k));
                (u, objective, true)
            }
            Err(e) => match &previous {
                Some((sol, start)) if k - start < n => {
                    let u: Vec<f64> = sol.u_seq.iter().map(|u| u[k - start]).collect();
                    (u, None, false)
                }
                _ => return Err(e),
            },
        };
        steps.push(MpcStep {
            step: k,
            x_hlip: state.iter().map(|x| (*x).into()).collect(),
            u_hlip: u.clone(),
            replanned,
            objective,
        });
        for (j, plane) in template.planes.iter().enumerate() {
            state[j] = plane.s2s.step3(&state[j], u[j]);
        }
    }
    Ok(MpcTrack { steps })
}
