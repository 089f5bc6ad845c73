//! Step-size feedback `u = u_hlip + K (x - x_hlip)` around per-plane H-LIP
//! references, and their composition into 3D walking.

use serde::{Deserialize, Serialize};

use crate::aslip::{Side, StepCommand, StepContext};
use crate::error::{Error, Result};
use crate::hlip::{spectral_radius, P1Orbit, P2Orbit, StepToStep, SteppingGain};

/// Default kinematic step-size limit per plane [m].
pub const DEFAULT_U_MAX: f64 = 0.5;
/// Default minimum lateral step magnitude [m].
pub const DEFAULT_MIN_FOOT_SEPARATION: f64 = 0.1;

/// Reference states and inputs indexed by pre-impact step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedSequence {
    /// Step index of `states[0]`.
    pub start_index: usize,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ReferenceMode {
    P1(P1Orbit),
    P2(P2Orbit),
    Planned(PlannedSequence),
}

/// H-LIP reference of one plane together with its stabilizing gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneReference {
    pub mode: ReferenceMode,
    pub gain: SteppingGain,
    /// `rho(A + B K)` on the plane's map.
    pub spectral_radius: f64,
}

impl PlaneReference {
    /// Checks that `gain` stabilizes `s2s` and matches the reference's state
    /// dimension.
    pub fn new<S: StepToStep + ?Sized>(
        mode: ReferenceMode,
        gain: SteppingGain,
        s2s: &S,
    ) -> Result<Self> {
        let dim = gain.dim();
        match &mode {
            ReferenceMode::P1(_) | ReferenceMode::P2(_) if dim != 2 => {
                return Err(Error::InvalidParameter(format!(
                    "orbit references use the 2-state map, got a gain of length {dim}"
                )))
            }
            ReferenceMode::Planned(seq) => {
                if seq.states.len() != seq.inputs.len() {
                    return Err(Error::InvalidParameter(format!(
                        "planned sequence has {} states but {} inputs",
                        seq.states.len(),
                        seq.inputs.len()
                    )));
                }
                if let Some(bad) = seq.states.iter().find(|x| x.len() != dim) {
                    return Err(Error::InvalidParameter(format!(
                        "planned state of length {} does not match gain length {dim}",
                        bad.len()
                    )));
                }
            }
            _ => {}
        }
        let rho = spectral_radius(&gain.closed_loop(s2s)?);
        if !(rho < 1.0) {
            return Err(Error::Unstable {
                spectral_radius: rho,
            });
        }
        Ok(Self {
            mode,
            gain,
            spectral_radius: rho,
        })
    }

    pub fn dim(&self) -> usize {
        self.gain.dim()
    }

    fn label(&self) -> &'static str {
        match self.mode {
            ReferenceMode::P1(_) => "P1",
            ReferenceMode::P2(_) => "P2",
            ReferenceMode::Planned(_) => "planned",
        }
    }
}

/// Reference `(x_hlip_k, u_hlip_k)` at pre-impact step `k`.
pub fn advance_reference(reference: &PlaneReference, k: usize) -> Result<(Vec<f64>, f64)> {
    match &reference.mode {
        ReferenceMode::P1(orbit) => Ok((vec![orbit.p_star, orbit.v_star], orbit.u_star)),
        ReferenceMode::P2(orbit) => Ok(match Side::for_step(k) {
            Side::Left => (vec![orbit.p_star_l, orbit.v_star_l], orbit.u_star_l),
            Side::Right => (vec![orbit.p_star_r, orbit.v_star_r], orbit.u_star_r),
        }),
        ReferenceMode::Planned(seq) => {
            let horizon = seq.start_index + seq.states.len();
            if k < seq.start_index || k >= horizon {
                return Err(Error::ReferenceExhausted { step: k, horizon });
            }
            let i = k - seq.start_index;
            Ok((seq.states[i].clone(), seq.inputs[i]))
        }
    }
}

/// `u = u_hlip + K (x_aslip - x_hlip)`.
///
/// # Panics
/// If the state and gain lengths differ.
pub fn stepping_controller(
    x_aslip: &[f64],
    x_hlip: &[f64],
    u_hlip: f64,
    gain: &SteppingGain,
) -> f64 {
    assert!(
        x_aslip.len() == gain.dim() && x_hlip.len() == gain.dim(),
        "state lengths {} and {} do not match gain length {}",
        x_aslip.len(),
        x_hlip.len(),
        gain.dim()
    );
    let e: Vec<f64> = x_aslip.iter().zip(x_hlip).map(|(a, h)| a - h).collect();
    u_hlip + gain.apply(&e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompositionKind {
    P1P2,
    P2P2,
    Planned,
}

/// Forward (x) and lateral (y) references walked together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition3D {
    pub x_plane: PlaneReference,
    pub y_plane: PlaneReference,
    pub kind: CompositionKind,
    pub u_max: f64,
}

/// Validates a 3D composition. The lateral plane must alternate its steps
/// (P2 or planned); P2 lateral steps must be at least `min_foot_separation`
/// in magnitude.
pub fn compose_3d(
    x_plane: PlaneReference,
    y_plane: PlaneReference,
    min_foot_separation: f64,
) -> Result<Composition3D> {
    use ReferenceMode::*;
    let kind = match (&x_plane.mode, &y_plane.mode) {
        (P1(_), P1(_)) => {
            return Err(Error::InvalidParameter(
                "P1-P1 cannot be realized: lateral P1 steps would be zero or cross the legs".into(),
            ))
        }
        (P1(_), P2(_)) => CompositionKind::P1P2,
        (P2(_), P2(_)) => CompositionKind::P2P2,
        (Planned(_), Planned(_)) => CompositionKind::Planned,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "unsupported composition {} (x) with {} (y)",
                x_plane.label(),
                y_plane.label()
            )))
        }
    };
    if let P2(orbit) = &y_plane.mode {
        let smallest = orbit.u_star_l.abs().min(orbit.u_star_r.abs());
        if smallest < min_foot_separation {
            return Err(Error::InvalidParameter(format!(
                "lateral step {smallest:.4} m is below the minimum foot separation {min_foot_separation:.4} m"
            )));
        }
    }
    Ok(Composition3D {
        x_plane,
        y_plane,
        kind,
        u_max: DEFAULT_U_MAX,
    })
}

impl Composition3D {
    pub fn with_u_max(mut self, u_max: f64) -> Self {
        self.u_max = u_max;
        self
    }

    /// Step size for the pre-impact state predicted in `ctx`, saturated to
    /// `u_max` per plane.
    pub fn command(&self, ctx: &StepContext) -> Result<[f64; 2]> {
        let mut u = [0.0; 2];
        for (axis, plane) in [&self.x_plane, &self.y_plane].into_iter().enumerate() {
            let (x_hlip, u_hlip) = advance_reference(plane, ctx.step_index)?;
            let x: Vec<f64> = if plane.dim() == 3 {
                ctx.plane_extended(axis).to_vec()
            } else {
                vec![ctx.predicted[2 * axis], ctx.predicted[2 * axis + 1]]
            };
            u[axis] = stepping_controller(&x, &x_hlip, u_hlip, &plane.gain)
                .clamp(-self.u_max, self.u_max);
        }
        Ok(u)
    }

    /// H-LIP reference `([x_ref, y_ref], [u_x, u_y])` at step `k`.
    pub fn reference_at(&self, k: usize) -> Result<([Vec<f64>; 2], [f64; 2])> {
        let (x, ux) = advance_reference(&self.x_plane, k)?;
        let (y, uy) = advance_reference(&self.y_plane, k)?;
        Ok(([x, y], [ux, uy]))
    }
}

impl StepCommand for Composition3D {
    fn step_size(&self, ctx: &StepContext) -> Result<[f64; 2]> {
        self.command(ctx)
    }
}
