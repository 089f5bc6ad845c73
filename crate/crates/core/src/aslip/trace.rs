use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::dynamics::vertical_force;
use super::model::{ASlipParams, ASlipState, Domain, Side};
use crate::error::Result;

/// Pre-impact snapshot on the switching surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreImpact {
    pub step_index: usize,
    pub time: f64,
    pub stance: Side,
    pub stance_foot: [f64; 3],
    /// `[p_x, v_x, p_y, v_y]` relative to the stance foot.
    pub x: [f64; 4],
    /// Global horizontal mass position `[x, y]`.
    pub global: [f64; 2],
    /// Realized step size: touching-down foot minus stance foot.
    pub u: [f64; 2],
    pub height: f64,
    pub vertical_velocity: f64,
}

impl PreImpact {
    pub fn from_state(state: &ASlipState) -> Self {
        let stance = state.domain.stance();
        let foot = state.leg(stance).foot;
        let swing = state.leg(stance.other()).foot;
        Self {
            step_index: state.step_index,
            time: state.time,
            stance,
            stance_foot: [foot.x, foot.y, foot.z],
            x: state.horizontal(),
            global: [state.pos.x, state.pos.y],
            u: [swing.x - foot.x, swing.y - foot.y],
            height: state.pos.z,
            vertical_velocity: state.vel.z,
        }
    }

    /// Planar state `[p, v]` of the x (`axis = 0`) or y (`axis = 1`) plane.
    pub fn plane(&self, axis: usize) -> [f64; 2] {
        [self.x[2 * axis], self.x[2 * axis + 1]]
    }

    /// Extended planar state `[x, p, v]`.
    pub fn plane_extended(&self, axis: usize) -> [f64; 3] {
        [self.global[axis], self.x[2 * axis], self.x[2 * axis + 1]]
    }
}

/// One time sample of a simulated step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub step_index: usize,
    pub domain: Domain,
    pub stance_foot: [f64; 2],
    pub pos: [f64; 3],
    pub vel: [f64; 3],
    pub length: [f64; 2],
    pub deformation: [f64; 2],
    pub force_z: [f64; 2],
}

impl Sample {
    pub fn from_state(state: &ASlipState, params: &ASlipParams) -> Self {
        Self {
            t: state.time,
            step_index: state.step_index,
            domain: state.domain,
            stance_foot: {
                let f = state.stance_foot();
                [f.x, f.y]
            },
            pos: state.pos.into(),
            vel: state.vel.into(),
            length: [state.left.length, state.right.length],
            deformation: [state.left.deformation, state.right.deformation],
            force_z: [
                vertical_force(state, Side::Left, params),
                vertical_force(state, Side::Right, params),
            ],
        }
    }

    pub fn pos_vec(&self) -> Vector3<f64> {
        Vector3::from(self.pos)
    }
}

/// Everything recorded while simulating one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub start: PreImpact,
    /// `None` when the step failed before reaching the switching surface.
    pub end: Option<PreImpact>,
    pub t_dsp: f64,
    pub t_ssp: f64,
    pub samples: Vec<Sample>,
}

pub const CSV_HEADER: [&str; 17] = [
    "t",
    "px",
    "py",
    "pz",
    "vx",
    "vy",
    "vz",
    "L_left",
    "L_right",
    "s_left",
    "s_right",
    "Fz_left",
    "Fz_right",
    "domain",
    "step_index",
    "stance_x",
    "stance_y",
];

/// Writes the samples of all traces as CSV, keeping every `stride`-th sample
/// of each step (first and last are always kept).
pub fn write_trace_csv<W: Write>(traces: &[StepTrace], stride: usize, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    let stride = stride.max(1);
    for trace in traces {
        let n = trace.samples.len();
        for (i, s) in trace.samples.iter().enumerate() {
            if i % stride != 0 && i + 1 != n {
                continue;
            }
            let mut row: Vec<String> = Vec::with_capacity(CSV_HEADER.len());
            row.push(fmt(s.t));
            row.extend(s.pos.iter().map(|v| fmt(*v)));
            row.extend(s.vel.iter().map(|v| fmt(*v)));
            row.extend(s.length.iter().map(|v| fmt(*v)));
            row.extend(s.deformation.iter().map(|v| fmt(*v)));
            row.extend(s.force_z.iter().map(|v| fmt(*v)));
            row.push(s.domain.label().to_string());
            row.push(s.step_index.to_string());
            row.push(fmt(s.stance_foot[0]));
            row.push(fmt(s.stance_foot[1]));
            writer.write_record(&row)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Shortest round-trip decimal representation.
pub(crate) fn fmt(v: f64) -> String {
    format!("{v:?}")
}
