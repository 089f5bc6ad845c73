//! Hybrid integration of one step: impact, double support until the trailing
//! leg unloads, single support until the swing foot lands.

use nalgebra::{Vector2, Vector3};

use super::control::{leg_length_control, swing_foot_reference, LegRole};
use super::dynamics::{continuous_dynamics, leg_force, update_deformations, Derivative};
use super::model::{ASlipParams, ASlipState, Domain, Side};
use super::trace::{PreImpact, Sample, StepTrace};
use crate::error::{Error, Result};
use crate::gait::GaitTrajectory;
use crate::hlip::{flow_state, HlipDomain};

/// Fixed RK4 step.
pub const DT: f64 = 1e-4;
/// Guard magnitude accepted at a located event.
pub const GUARD_TOLERANCE: f64 = 1e-10;
/// Smallest bracket width of the event search, in seconds.
pub const EVENT_TIME_TOLERANCE: f64 = 1e-15;
/// Fraction of the nominal single support after which the target is frozen.
pub const TARGET_FREEZE: f64 = 0.9;
/// Mass height, as a fraction of the nominal height, that counts as a fall.
pub const FALL_FRACTION: f64 = 0.3;
/// Tolerance on the swing-foot height when checking the switching surface.
pub const SURFACE_TOLERANCE: f64 = 1e-9;

/// What the step controller sees while a swing is in progress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    /// Index of the pre-impact state the swing is heading to; the returned
    /// step size is applied at that impact.
    pub step_index: usize,
    pub stance: Side,
    pub stance_foot: Vector3<f64>,
    /// H-LIP prediction of `[p_x, v_x, p_y, v_y]` at the end of single support.
    pub predicted: [f64; 4],
    /// Predicted global horizontal mass position.
    pub predicted_global: [f64; 2],
    /// Seconds of single support left.
    pub remaining: f64,
}

impl StepContext {
    pub fn plane_extended(&self, axis: usize) -> [f64; 3] {
        [
            self.predicted_global[axis],
            self.predicted[2 * axis],
            self.predicted[2 * axis + 1],
        ]
    }
}

/// Source of step-size commands `[u_x, u_y]`. Must be a pure function of the
/// context.
pub trait StepCommand {
    fn step_size(&self, ctx: &StepContext) -> Result<[f64; 2]>;
}

/// A constant step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedStep(pub [f64; 2]);

impl StepCommand for FixedStep {
    fn step_size(&self, _ctx: &StepContext) -> Result<[f64; 2]> {
        Ok(self.0)
    }
}

impl<F> StepCommand for F
where
    F: Fn(&StepContext) -> [f64; 2],
{
    fn step_size(&self, ctx: &StepContext) -> Result<[f64; 2]> {
        Ok(self(ctx))
    }
}

fn role_of(state: &ASlipState, side: Side) -> LegRole {
    if state.domain.stance() == side {
        LegRole::Stance
    } else {
        LegRole::Swing
    }
}

fn derivative(
    state: &ASlipState,
    gait: &GaitTrajectory,
    params: &ASlipParams,
) -> Result<Derivative> {
    let mut tau = [0.0; 2];
    for (i, side) in [Side::Left, Side::Right].into_iter().enumerate() {
        let desired = gait.reference.role(role_of(state, side), state.t_step);
        tau[i] = leg_length_control(state.leg(side), desired, params);
    }
    continuous_dynamics(state, tau, params)
}

/// Places the swing foot on its reference and refreshes spring deformations.
fn refresh_kinematics(
    state: &mut ASlipState,
    gait: &GaitTrajectory,
    params: &ASlipParams,
) -> Result<()> {
    if let Domain::Ssp(stance) = state.domain {
        let (pos, vel) = swing_foot_reference(
            state.t_domain,
            &state.swing_start,
            &state.swing_target,
            gait.t_ssp,
            params.swing_clearance,
        );
        let swing = state.leg_mut(stance.other());
        swing.foot = pos;
        swing.foot_vel = vel;
    }
    update_deformations(state)
}

fn advanced(base: &ASlipState, d: &Derivative, h: f64) -> ASlipState {
    let mut s = *base;
    s.pos += d.pos * h;
    s.vel += d.vel * h;
    s.left.length += d.length[0] * h;
    s.right.length += d.length[1] * h;
    s.left.length_rate += d.length_rate[0] * h;
    s.right.length_rate += d.length_rate[1] * h;
    s.time += h;
    s.t_domain += h;
    s.t_step += h;
    s
}

/// One classical Runge-Kutta step of size `h`.
pub fn rk4_step(
    state: &ASlipState,
    h: f64,
    gait: &GaitTrajectory,
    params: &ASlipParams,
) -> Result<ASlipState> {
    let k1 = derivative(state, gait, params)?;
    let mut s2 = advanced(state, &k1, 0.5 * h);
    refresh_kinematics(&mut s2, gait, params)?;
    let k2 = derivative(&s2, gait, params)?;
    let mut s3 = advanced(state, &k2, 0.5 * h);
    refresh_kinematics(&mut s3, gait, params)?;
    let k3 = derivative(&s3, gait, params)?;
    let mut s4 = advanced(state, &k3, h);
    refresh_kinematics(&mut s4, gait, params)?;
    let k4 = derivative(&s4, gait, params)?;
    let combined = Derivative {
        pos: (k1.pos + 2.0 * k2.pos + 2.0 * k3.pos + k4.pos) / 6.0,
        vel: (k1.vel + 2.0 * k2.vel + 2.0 * k3.vel + k4.vel) / 6.0,
        length: [
            (k1.length[0] + 2.0 * k2.length[0] + 2.0 * k3.length[0] + k4.length[0]) / 6.0,
            (k1.length[1] + 2.0 * k2.length[1] + 2.0 * k3.length[1] + k4.length[1]) / 6.0,
        ],
        length_rate: [
            (k1.length_rate[0]
                + 2.0 * k2.length_rate[0]
                + 2.0 * k3.length_rate[0]
                + k4.length_rate[0])
                / 6.0,
            (k1.length_rate[1]
                + 2.0 * k2.length_rate[1]
                + 2.0 * k3.length_rate[1]
                + k4.length_rate[1])
                / 6.0,
        ],
    };
    let mut next = advanced(state, &combined, h);
    refresh_kinematics(&mut next, gait, params)?;
    Ok(next)
}

/// Locates the first zero of `guard` inside an RK4 step known to bracket a
/// sign change from positive to non-positive. Uses the Illinois variant of
/// regula falsi on the sub-step length.
fn locate_event<G>(
    start: &ASlipState,
    dt: f64,
    guard: G,
    gait: &GaitTrajectory,
    params: &ASlipParams,
) -> Result<ASlipState>
where
    G: Fn(&ASlipState) -> f64,
{
    let (mut lo, mut hi) = (0.0, dt);
    let mut g_lo = guard(start);
    let mut hi_state = rk4_step(start, hi, gait, params)?;
    let mut g_hi = guard(&hi_state);
    if g_hi.abs() <= GUARD_TOLERANCE {
        return Ok(hi_state);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        if hi - lo <= EVENT_TIME_TOLERANCE {
            break;
        }
        let mut h = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        if !(h > lo && h < hi) {
            h = 0.5 * (lo + hi);
        }
        let s = rk4_step(start, h, gait, params)?;
        let g = guard(&s);
        if g.abs() <= GUARD_TOLERANCE {
            return Ok(s);
        }
        if g > 0.0 {
            lo = h;
            g_lo = g;
            if side == 1 {
                g_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = h;
            g_hi = g;
            hi_state = s;
            if side == -1 {
                g_lo *= 0.5;
            }
            side = -1;
        }
    }
    Ok(hi_state)
}

/// Applies touchdown of the swing leg: the foot is pinned, the spring starts
/// unloaded, `Ldot` is kept and the jump lands on `sdot`.
pub fn impact_map(state: &ASlipState) -> Result<ASlipState> {
    let Domain::Ssp(stance) = state.domain else {
        return Err(Error::Contract("impact requires single support".into()));
    };
    let new_side = stance.other();
    let swing = state.leg(new_side);
    if swing.foot.z.abs() > SURFACE_TOLERANCE || !(swing.foot_vel.z < 0.0) {
        return Err(Error::Contract(format!(
            "impact off the switching surface (foot height {:.3e}, vertical velocity {:.3e})",
            swing.foot.z, swing.foot_vel.z
        )));
    }
    let mut next = *state;
    let leg = next.leg_mut(new_side);
    leg.foot.z = 0.0;
    leg.foot_vel = Vector3::zeros();
    leg.in_contact = true;
    let axis = state.pos - leg.foot;
    let r = axis.norm();
    if !(r > 1e-9) {
        return Err(Error::SingularLeg { length: r });
    }
    let r_dot = axis.dot(&state.vel) / r;
    leg.length = r;
    leg.deformation = 0.0;
    leg.deformation_rate = leg.length_rate - r_dot;
    next.domain = Domain::Dsp { leading: new_side };
    next.t_domain = 0.0;
    next.t_step = 0.0;
    update_deformations(&mut next)?;
    Ok(next)
}

fn predict(state: &ASlipState, gait: &GaitTrajectory) -> StepContext {
    let stance = state.domain.stance();
    let foot = state.leg(stance).foot;
    let remaining = (gait.t_ssp - state.t_domain).max(0.0);
    let lambda = gait.hlip.lambda();
    let x = flow_state(
        &Vector2::new(state.pos.x - foot.x, state.vel.x),
        remaining,
        lambda,
        HlipDomain::Ssp,
    );
    let y = flow_state(
        &Vector2::new(state.pos.y - foot.y, state.vel.y),
        remaining,
        lambda,
        HlipDomain::Ssp,
    );
    StepContext {
        step_index: state.step_index + 1,
        stance,
        stance_foot: foot,
        predicted: [x[0], x[1], y[0], y[1]],
        predicted_global: [foot.x + x[0], foot.y + y[0]],
        remaining,
    }
}

struct StepRun<'a> {
    gait: &'a GaitTrajectory,
    params: &'a ASlipParams,
    start: PreImpact,
    samples: Vec<Sample>,
    t_dsp: f64,
    t_ssp: f64,
}

impl StepRun<'_> {
    fn fail(self, step: usize, reason: String) -> Error {
        Error::StepFailure {
            step,
            reason,
            partial: Box::new(StepTrace {
                start: self.start,
                end: None,
                t_dsp: self.t_dsp,
                t_ssp: self.t_ssp,
                samples: self.samples,
            }),
        }
    }

    fn record(&mut self, state: &ASlipState) {
        self.samples.push(Sample::from_state(state, self.params));
    }

    fn check_fall(&self, state: &ASlipState) -> Option<String> {
        let limit = FALL_FRACTION * self.gait.z0_avg;
        if !(state.pos.z >= limit) {
            return Some(format!(
                "mass height {:.4} m fell below {:.4} m",
                state.pos.z, limit
            ));
        }
        if state.t_step > 3.0 * self.gait.step_period() {
            return Some(format!(
                "no touchdown within {:.3} s",
                3.0 * self.gait.step_period()
            ));
        }
        None
    }
}

/// Simulates from one pre-impact state to the next, evaluating one
/// application of the true step-to-step map. The swing target is refreshed
/// from `command` until the last 10% of single support.
pub fn simulate_step<C: StepCommand + ?Sized>(
    state: &ASlipState,
    command: &C,
    gait: &GaitTrajectory,
    params: &ASlipParams,
) -> Result<(ASlipState, StepTrace)> {
    let k = state.step_index;
    let mut run = StepRun {
        gait,
        params,
        start: PreImpact::from_state(state),
        samples: Vec::with_capacity((gait.step_period() / DT) as usize + 16),
        t_dsp: 0.0,
        t_ssp: 0.0,
    };
    if run.start.u.iter().any(|u| !u.is_finite()) {
        return Err(run.fail(k, "non-finite step size".into()));
    }

    let mut s = impact_map(state)?;
    run.record(&s);

    // Double support until the trailing leg unloads.
    let Domain::Dsp { leading } = s.domain else {
        unreachable!("impact always enters double support")
    };
    let trailing = leading.other();
    let unload = |st: &ASlipState| leg_force(st.leg(trailing), params);
    if unload(&s) > 0.0 {
        loop {
            let next = rk4_step(&s, DT, gait, params)?;
            if unload(&next) <= 0.0 {
                s = locate_event(&s, DT, unload, gait, params)?;
                run.record(&s);
                break;
            }
            s = next;
            run.record(&s);
            if let Some(reason) = run.check_fall(&s) {
                return Err(run.fail(k, reason));
            }
        }
    }
    run.t_dsp = s.t_domain;

    // Liftoff.
    {
        let leg = s.leg_mut(trailing);
        leg.in_contact = false;
        leg.deformation = 0.0;
        leg.deformation_rate = 0.0;
    }
    s.domain = Domain::Ssp(leading);
    s.t_domain = 0.0;
    s.swing_start = s.leg(trailing).foot;
    let max_reach = 2.0 * params.l_max;

    let set_target = |s: &mut ASlipState| -> Option<String> {
        let ctx = predict(s, gait);
        let u = match command.step_size(&ctx) {
            Ok(u) => u,
            Err(e) => return Some(format!("step controller failed: {e}")),
        };
        if u.iter().any(|v| !v.is_finite()) {
            return Some(format!("controller returned a non-finite step {u:?}"));
        }
        if Vector2::new(u[0], u[1]).norm() > max_reach {
            return Some(format!(
                "step size {u:?} beyond kinematic reach {max_reach:.3} m"
            ));
        }
        let foot = ctx.stance_foot;
        s.swing_target = Vector3::new(foot.x + u[0], foot.y + u[1], 0.0);
        None
    };
    if let Some(reason) = set_target(&mut s) {
        return Err(run.fail(k, reason));
    }
    refresh_kinematics(&mut s, gait, params)?;
    run.record(&s);

    let swing_height = |st: &ASlipState| st.leg(trailing).foot.z;
    loop {
        if s.t_domain < TARGET_FREEZE * gait.t_ssp {
            if let Some(reason) = set_target(&mut s) {
                return Err(run.fail(k, reason));
            }
            refresh_kinematics(&mut s, gait, params)?;
        }
        let next = rk4_step(&s, DT, gait, params)?;
        if swing_height(&s) > 0.0 && swing_height(&next) <= 0.0 {
            s = locate_event(&s, DT, swing_height, gait, params)?;
            break;
        }
        s = next;
        run.record(&s);
        if let Some(reason) = run.check_fall(&s) {
            return Err(run.fail(k, reason));
        }
    }
    run.t_ssp = s.t_domain;

    let reach = s.leg_extent(trailing);
    if reach > params.l_max {
        run.record(&s);
        return Err(run.fail(
            k,
            format!(
                "touchdown leg length {reach:.4} m exceeds l_max {:.4} m",
                params.l_max
            ),
        ));
    }
    s.step_index = k + 1;
    run.record(&s);
    let end = PreImpact::from_state(&s);
    let trace = StepTrace {
        start: run.start,
        end: Some(end),
        t_dsp: run.t_dsp,
        t_ssp: run.t_ssp,
        samples: run.samples,
    };
    Ok((s, trace))
}

/// Runs `n_steps` steps. A failure carries the index and partial trace of the
/// failing step; use [`simulate_walk_partial`] to keep the completed ones.
pub fn simulate_walk<C: StepCommand + ?Sized>(
    initial: &ASlipState,
    gait: &GaitTrajectory,
    params: &ASlipParams,
    controller: &C,
    n_steps: usize,
) -> Result<Vec<StepTrace>> {
    params.validate()?;
    let mut traces = Vec::with_capacity(n_steps);
    let mut state = *initial;
    for _ in 0..n_steps {
        let (next, trace) = simulate_step(&state, controller, gait, params)?;
        traces.push(trace);
        state = next;
    }
    Ok(traces)
}

/// Like [`simulate_walk`] but keeps the completed traces on failure.
pub fn simulate_walk_partial<C: StepCommand + ?Sized>(
    initial: &ASlipState,
    gait: &GaitTrajectory,
    params: &ASlipParams,
    controller: &C,
    n_steps: usize,
) -> (Vec<StepTrace>, Option<Error>) {
    let mut traces = Vec::with_capacity(n_steps);
    if let Err(e) = params.validate() {
        return (traces, Some(e));
    }
    let mut state = *initial;
    for _ in 0..n_steps {
        match simulate_step(&state, controller, gait, params) {
            Ok((next, trace)) => {
                traces.push(trace);
                state = next;
            }
            Err(e) => return (traces, Some(e)),
        }
    }
    (traces, None)
}
