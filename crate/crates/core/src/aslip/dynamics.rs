//! Continuous flow of the mass under the spring-leg forces.

use nalgebra::Vector3;

use super::model::{ASlipParams, ASlipState, LegState, Side};
use crate::error::{Error, Result};

/// Axial spring-damper force `K_s s + D_s sdot` (positive pushes the mass away
/// from the foot). No unilateral clamping.
pub fn leg_force(leg: &LegState, params: &ASlipParams) -> f64 {
    params.k_s * leg.deformation + params.d_s * leg.deformation_rate
}

/// Force actually transmitted by a contact leg; the ground cannot pull.
pub fn contact_force(leg: &LegState, params: &ASlipParams) -> f64 {
    if leg.in_contact {
        leg_force(leg, params).max(0.0)
    } else {
        0.0
    }
}

/// Time derivative of the integrated coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
    pub length: [f64; 2],
    pub length_rate: [f64; 2],
}

/// Refreshes `s` and `sdot` of the contact legs from the mass state and
/// returns the leg axis unit vectors.
pub fn update_deformations(state: &mut ASlipState) -> Result<()> {
    for side in [Side::Left, Side::Right] {
        let pos = state.pos;
        let vel = state.vel;
        let leg = state.leg_mut(side);
        if !leg.in_contact {
            leg.deformation = 0.0;
            leg.deformation_rate = 0.0;
            continue;
        }
        let axis = pos - leg.foot;
        let r = axis.norm();
        if !(r > 1e-9) {
            return Err(Error::SingularLeg { length: r });
        }
        let r_dot = axis.dot(&(vel - leg.foot_vel)) / r;
        leg.deformation = leg.length - r;
        leg.deformation_rate = leg.length_rate - r_dot;
    }
    Ok(())
}

/// Sum of the leg forces acting on the mass.
pub fn total_leg_force(state: &ASlipState, params: &ASlipParams) -> Result<Vector3<f64>> {
    let mut total = Vector3::zeros();
    for side in [Side::Left, Side::Right] {
        let leg = state.leg(side);
        if !leg.in_contact {
            continue;
        }
        let axis = state.pos - leg.foot;
        let r = axis.norm();
        if !(r > 1e-9) {
            return Err(Error::SingularLeg { length: r });
        }
        total += axis / r * contact_force(leg, params);
    }
    Ok(total)
}

/// `m Pddot = sum F + m g`, `Lddot = tau`. `state` must carry up-to-date
/// deformations (see [`update_deformations`]).
pub fn continuous_dynamics(
    state: &ASlipState,
    tau: [f64; 2],
    params: &ASlipParams,
) -> Result<Derivative> {
    let force = total_leg_force(state, params)?;
    Ok(Derivative {
        pos: state.vel,
        vel: force / params.m + params.gravity(),
        length: [state.left.length_rate, state.right.length_rate],
        length_rate: tau,
    })
}

/// Vertical ground reaction of one leg.
pub fn vertical_force(state: &ASlipState, side: Side, params: &ASlipParams) -> f64 {
    let leg = state.leg(side);
    if !leg.in_contact {
        return 0.0;
    }
    let axis = state.pos - leg.foot;
    let r = axis.norm();
    if r <= 0.0 {
        return 0.0;
    }
    contact_force(leg, params) * axis.z / r
}

/// Mechanical energy `0.5 m |v|^2 + m g z`.
pub fn mechanical_energy(state: &ASlipState, params: &ASlipParams) -> f64 {
    0.5 * params.m * state.vel.norm_squared() + params.m * params.g * state.pos.z
}

/// Power delivered to the mass by the legs, `sum F rdot`.
pub fn leg_power(state: &ASlipState, params: &ASlipParams) -> Result<f64> {
    Ok(total_leg_force(state, params)?.dot(&state.vel))
}
