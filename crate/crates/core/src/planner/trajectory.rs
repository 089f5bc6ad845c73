use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::aslip::Side;
use crate::error::{Error, Result};
use crate::hlip::{p2_orbit, HlipParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x_d: f64,
    pub y_d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vx_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vy_d: Option<f64>,
}

/// Desired horizontal path of the mass, linearly interpolated in time and
/// held constant past its ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesiredTrajectory {
    samples: Vec<TrajectorySample>,
}

impl DesiredTrajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidParameter(
                "a trajectory needs at least two samples".into(),
            ));
        }
        for (i, s) in samples.iter().enumerate() {
            let finite = [Some(s.t), Some(s.x_d), Some(s.y_d), s.vx_d, s.vy_d]
                .iter()
                .flatten()
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidParameter(format!(
                    "non-finite value in trajectory row {i}"
                )));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(Error::InvalidParameter(format!(
                    "trajectory times must increase (row {i}: {} after {})",
                    s.t,
                    samples[i - 1].t
                )));
            }
        }
        Ok(Self { samples })
    }

    /// `x = v_x t`, `y = amplitude sin(2 pi t / period)` sampled every `dt`.
    pub fn sinusoid(v_x: f64, amplitude: f64, period: f64, duration: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && duration > dt && period > 0.0) {
            return Err(Error::InvalidParameter(
                "need dt > 0, duration > dt, period > 0".into(),
            ));
        }
        let omega = std::f64::consts::TAU / period;
        let n = (duration / dt).round() as usize;
        let samples = (0..=n)
            .map(|i| {
                let t = i as f64 * dt;
                TrajectorySample {
                    t,
                    x_d: v_x * t,
                    y_d: amplitude * (omega * t).sin(),
                    vx_d: Some(v_x),
                    vy_d: Some(amplitude * omega * (omega * t).cos()),
                }
            })
            .collect();
        Self::new(samples)
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].t - self.samples[0].t
    }

    fn segment(&self, t: f64) -> (usize, f64) {
        let s = &self.samples;
        if t <= s[0].t {
            return (0, 0.0);
        }
        if t >= s[s.len() - 1].t {
            return (s.len() - 2, 1.0);
        }
        let i = s.partition_point(|p| p.t <= t) - 1;
        (i, (t - s[i].t) / (s[i + 1].t - s[i].t))
    }

    pub fn position(&self, t: f64) -> [f64; 2] {
        let (i, a) = self.segment(t);
        let (p, q) = (&self.samples[i], &self.samples[i + 1]);
        [p.x_d + a * (q.x_d - p.x_d), p.y_d + a * (q.y_d - p.y_d)]
    }

    /// Velocity columns when given, else the slope of the enclosing segment.
    /// Zero past the ends.
    pub fn velocity(&self, t: f64) -> [f64; 2] {
        let s = &self.samples;
        if t < s[0].t || t > s[s.len() - 1].t {
            return [0.0; 2];
        }
        let (i, a) = self.segment(t);
        let (p, q) = (&s[i], &s[i + 1]);
        let dt = q.t - p.t;
        let pick = |given: (Option<f64>, Option<f64>), slope: f64| match given {
            (Some(u), Some(v)) => u + a * (v - u),
            _ => slope,
        };
        [
            pick((p.vx_d, q.vx_d), (q.x_d - p.x_d) / dt),
            pick((p.vy_d, q.vy_d), (q.y_d - p.y_d) / dt),
        ]
    }

    /// Desired extended state `[x, p, v]` of one plane at time `t`: the
    /// position of the path and the period-1 set point of its velocity.
    pub fn extended_target(&self, params: &HlipParams, axis: usize, t: f64) -> [f64; 3] {
        let v_d = self.velocity(t)[axis];
        let sigma1 = params.sigma1();
        let p = v_d * params.period() / (2.0 + params.t_dsp * sigma1);
        [self.position(t)[axis], p, sigma1 * p]
    }
}

/// Desired lateral extended state at a pre-impact with `side` in stance:
/// the period-2 set point of velocity `v` with steps `v T -/+ width`, placed
/// so the feet straddle `center`.
pub fn lateral_target(
    params: &HlipParams,
    center: f64,
    v: f64,
    width: f64,
    side: Side,
) -> Result<[f64; 3]> {
    let orbit = p2_orbit(params, v, v * params.period() - width)?;
    let (offset, p, vel) = match side {
        Side::Left => (0.5 * width, orbit.p_star_l, orbit.v_star_l),
        Side::Right => (-0.5 * width, orbit.p_star_r, orbit.v_star_r),
    };
    Ok([center + offset + p, p, vel])
}

/// Reads a trajectory with header columns `t, x_d, y_d` and optional
/// `vx_d, vy_d`.
pub fn read_trajectory_csv<R: Read>(reader: R) -> Result<DesiredTrajectory> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    for column in ["t", "x_d", "y_d"] {
        if !headers.iter().any(|h| h == column) {
            return Err(Error::Schema(format!(
                "trajectory CSV is missing column `{column}`"
            )));
        }
    }
    let samples = csv
        .deserialize()
        .collect::<std::result::Result<Vec<TrajectorySample>, _>>()?;
    DesiredTrajectory::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reads_minimal_columns() {
        let text = "t,x_d,y_d\n0,0,0\n1,0.3,0.1\n2,0.6,0.0\n";
        let traj = read_trajectory_csv(text.as_bytes()).unwrap();
        assert_eq!(traj.samples().len(), 3);
        assert_relative_eq!(traj.position(0.5)[0], 0.15, epsilon = 1e-12);
        assert_relative_eq!(traj.velocity(0.5)[0], 0.3, epsilon = 1e-12);
        assert_relative_eq!(traj.velocity(1.5)[1], -0.1, epsilon = 1e-12);
        assert_relative_eq!(traj.position(9.0)[0], 0.6);
        assert_eq!(traj.velocity(9.0), [0.0; 2]);
    }

    #[test]
    fn reads_velocity_columns() {
        let text = "t,x_d,y_d,vx_d,vy_d\n0,0,0,0.2,0\n1,0.3,0,0.4,0\n";
        let traj = read_trajectory_csv(text.as_bytes()).unwrap();
        assert_relative_eq!(traj.velocity(0.5)[0], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn missing_column_is_named() {
        let err = read_trajectory_csv("t,x_d\n0,0\n1,1\n".as_bytes()).unwrap_err();
        assert!(
            matches!(&err, Error::Schema(m) if m.contains("y_d")),
            "{err}"
        );
    }

    #[test]
    fn rejects_unsorted_times() {
        assert!(read_trajectory_csv("t,x_d,y_d\n0,0,0\n0,1,0\n".as_bytes()).is_err());
    }

    #[test]
    fn lateral_targets_are_a_period_two_cycle() {
        let params = HlipParams::new(1.0, 9.81, 0.3, 0.05).unwrap();
        let s2s = crate::hlip::extend_s2s(&crate::hlip::s2s_matrices(&params).unwrap());
        let width = 0.3;
        let l = lateral_target(&params, 0.0, 0.0, width, Side::Left).unwrap();
        let r = lateral_target(&params, 0.0, 0.0, width, Side::Right).unwrap();
        assert_relative_eq!(l[0], -r[0], epsilon = 1e-12);
        let next = s2s.step3(&nalgebra::Vector3::from(l), -width);
        assert_relative_eq!(next, nalgebra::Vector3::from(r), epsilon = 1e-12);
        let back = s2s.step3(&next, width);
        assert_relative_eq!(back, nalgebra::Vector3::from(l), epsilon = 1e-12);
    }

    #[test]
    fn target_uses_period_one_set_point() {
        let params = HlipParams::new(1.0, 9.81, 0.3, 0.05).unwrap();
        let traj = DesiredTrajectory::sinusoid(0.3, 0.2, 4.0, 10.0, 0.01).unwrap();
        let orbit = crate::hlip::p1_orbit(&params, 0.3).unwrap();
        let x = traj.extended_target(&params, 0, 2.0);
        assert_relative_eq!(x[0], 0.6, epsilon = 1e-12);
        assert_relative_eq!(x[1], orbit.p_star, epsilon = 1e-12);
        assert_relative_eq!(x[2], orbit.v_star, epsilon = 1e-12);
    }
}
