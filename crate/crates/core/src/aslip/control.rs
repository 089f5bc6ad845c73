use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::model::{ASlipParams, LegState};

/// Role a leg plays during the current step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LegRole {
    /// Touched down at the start of the step.
    Stance,
    /// Trailing in double support, then swinging.
    Swing,
}

/// Periodic leg-length reference as a Fourier series with period
/// `2 * half_period`: `c0 + sum_j a_j cos(j w t) + b_j sin(j w t)`,
/// `w = pi / half_period`. Coefficients are stored `[c0, a1, b1, a2, b2, ...]`.
///
/// The stance role reads the series at the time since touchdown, the swing
/// role half a period later, so one leg's swing continues where its stance
/// ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegLengthReference {
    pub half_period: f64,
    pub coefficients: Vec<f64>,
}

impl LegLengthReference {
    pub fn constant(half_period: f64, length: f64, harmonics: usize) -> Self {
        let mut coefficients = vec![0.0; 1 + 2 * harmonics];
        coefficients[0] = length;
        Self {
            half_period,
            coefficients,
        }
    }

    pub fn harmonics(&self) -> usize {
        (self.coefficients.len().saturating_sub(1)) / 2
    }

    /// `(L, Ldot, Lddot)` at phase `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let w = PI / self.half_period;
        let mut l = self.coefficients[0];
        let mut ld = 0.0;
        let mut ldd = 0.0;
        for j in 1..=self.harmonics() {
            let a = self.coefficients[2 * j - 1];
            let b = self.coefficients[2 * j];
            let wj = w * j as f64;
            let (s, c) = (wj * t).sin_cos();
            l += a * c + b * s;
            ld += wj * (-a * s + b * c);
            ldd += -wj * wj * (a * c + b * s);
        }
        (l, ld, ldd)
    }

    pub fn role(&self, role: LegRole, t_step: f64) -> (f64, f64, f64) {
        match role {
            LegRole::Stance => self.eval(t_step),
            LegRole::Swing => self.eval(t_step + self.half_period),
        }
    }
}

/// Leg-length acceleration command
/// `tau = Lddot_des + kp (L - L_des) + kd (Ldot - Ldot_des)`, with a virtual
/// wall keeping `L` inside `[l_min, l_max]`.
pub fn leg_length_control(leg: &LegState, desired: (f64, f64, f64), params: &ASlipParams) -> f64 {
    let (l_des, ld_des, ldd_des) = desired;
    let mut tau =
        ldd_des + params.kp_leg * (leg.length - l_des) + params.kd_leg * (leg.length_rate - ld_des);
    if leg.length >= params.l_max {
        let wall = params.kp_leg * (leg.length - params.l_max) + params.kd_leg * leg.length_rate;
        tau = tau.min(wall);
    } else if leg.length <= params.l_min {
        let wall = params.kp_leg * (leg.length - params.l_min) + params.kd_leg * leg.length_rate;
        tau = tau.max(wall);
    }
    tau
}

/// Swing-foot position and velocity at `t` seconds into single support.
///
/// Horizontal: smoothstep `3s^2 - 2s^3` from `start` to `target`. Vertical:
/// `h = c q (2 - q)` with `q = 4 s (1 - s)`, which is zero at both ends,
/// peaks at `clearance` mid-swing and lands with velocity `-8 c / t_ssp`.
pub fn swing_foot_reference(
    t: f64,
    start: &Vector3<f64>,
    target: &Vector3<f64>,
    t_ssp: f64,
    clearance: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let s = t / t_ssp;
    let sc = s.clamp(0.0, 1.0);
    let blend = sc * sc * (3.0 - 2.0 * sc);
    let blend_rate = if (0.0..=1.0).contains(&s) {
        6.0 * s * (1.0 - s) / t_ssp
    } else {
        0.0
    };
    // The bump is evaluated unclamped so that it goes negative past t_ssp;
    // the touchdown guard relies on that sign change.
    let q = 4.0 * s * (1.0 - s);
    let q_rate = 4.0 * (1.0 - 2.0 * s) / t_ssp;
    let height = clearance * q * (2.0 - q);
    let height_rate = clearance * (2.0 - 2.0 * q) * q_rate;

    let mut pos = start + (target - start) * blend;
    let mut vel = (target - start) * blend_rate;
    pos.z = height;
    vel.z = height_rate;
    (pos, vel)
}
