use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and actuation parameters of the 3D actuated SLIP.
///
/// `kp_leg` and `kd_leg` enter the leg-length law as
/// `tau = Lddot_des + kp (L - L_des) + kd (Ldot - Ldot_des)`, so both must be
/// negative for the law to be a restoring one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ASlipParams {
    pub m: f64,
    pub k_s: f64,
    pub d_s: f64,
    pub g: f64,
    pub kp_leg: f64,
    pub kd_leg: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub swing_clearance: f64,
}

impl Default for ASlipParams {
    fn default() -> Self {
        Self {
            m: 100.0,
            k_s: 24_000.0,
            d_s: 700.0,
            g: 9.81,
            kp_leg: -400.0,
            kd_leg: -40.0,
            l_min: 0.6,
            l_max: 1.4,
            swing_clearance: 0.05,
        }
    }
}

impl ASlipParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.m,
            self.k_s,
            self.d_s,
            self.g,
            self.kp_leg,
            self.kd_leg,
            self.l_min,
            self.l_max,
            self.swing_clearance,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite aSLIP parameter".into()));
        }
        if self.m <= 0.0 || self.k_s <= 0.0 || self.d_s < 0.0 || self.g <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "need m > 0, k_s > 0, d_s >= 0, g > 0 (got m={}, k_s={}, d_s={}, g={})",
                self.m, self.k_s, self.d_s, self.g
            )));
        }
        if self.kp_leg >= 0.0 || self.kd_leg > 0.0 {
            return Err(Error::InvalidParameter(format!(
                "leg-length gains must be negative feedback (kp={}, kd={})",
                self.kp_leg, self.kd_leg
            )));
        }
        if !(0.0 < self.l_min && self.l_min < self.l_max) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < l_min < l_max (got {} .. {})",
                self.l_min, self.l_max
            )));
        }
        if self.swing_clearance <= 0.0 {
            return Err(Error::InvalidParameter(
                "swing clearance must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    /// Even step indices have the left foot in stance.
    pub fn for_step(k: usize) -> Side {
        if k % 2 == 0 {
            Side::Left
        } else {
            Side::Right
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// Single support on the given leg.
    Ssp(Side),
    /// Double support; `leading` touched down at the start of the domain.
    Dsp { leading: Side },
}

impl Domain {
    pub fn label(&self) -> &'static str {
        match self {
            Domain::Ssp(Side::Left) => "SSP_L",
            Domain::Ssp(Side::Right) => "SSP_R",
            Domain::Dsp { .. } => "DSP",
        }
    }

    /// Leg that carries the body through the rest of the step.
    pub fn stance(&self) -> Side {
        match *self {
            Domain::Ssp(side) => side,
            Domain::Dsp { leading } => leading,
        }
    }
}

/// One massless spring leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegState {
    /// Uncompressed (actuated) length and rate.
    pub length: f64,
    pub length_rate: f64,
    /// Spring deformation `s = L - r` and its rate while in contact.
    pub deformation: f64,
    pub deformation_rate: f64,
    pub foot: Vector3<f64>,
    pub foot_vel: Vector3<f64>,
    pub in_contact: bool,
}

impl LegState {
    pub fn standing(foot: Vector3<f64>, length: f64) -> Self {
        Self {
            length,
            length_rate: 0.0,
            deformation: 0.0,
            deformation_rate: 0.0,
            foot,
            foot_vel: Vector3::zeros(),
            in_contact: true,
        }
    }
}

/// Full hybrid state of the point mass and both legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ASlipState {
    pub time: f64,
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
    pub left: LegState,
    pub right: LegState,
    pub domain: Domain,
    pub t_domain: f64,
    /// Time since the most recent touchdown; phases the leg references.
    pub t_step: f64,
    pub step_index: usize,
    /// Where the swing foot left the ground.
    pub swing_start: Vector3<f64>,
    /// Current touchdown target of the swing foot.
    pub swing_target: Vector3<f64>,
}

impl ASlipState {
    pub fn leg(&self, side: Side) -> &LegState {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn leg_mut(&mut self, side: Side) -> &mut LegState {
        match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        }
    }

    pub fn stance_foot(&self) -> Vector3<f64> {
        self.leg(self.domain.stance()).foot
    }

    /// Horizontal state `[p_x, v_x, p_y, v_y]` relative to the stance foot.
    pub fn horizontal(&self) -> [f64; 4] {
        let foot = self.stance_foot();
        [
            self.pos.x - foot.x,
            self.vel.x,
            self.pos.y - foot.y,
            self.vel.y,
        ]
    }

    /// Actual leg length `r = |P - foot|`.
    pub fn leg_extent(&self, side: Side) -> f64 {
        (self.pos - self.leg(side).foot).norm()
    }
}
