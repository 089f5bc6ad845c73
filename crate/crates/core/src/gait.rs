//! One-time synthesis of the periodic stepping-in-place gait.
//!
//! The stance-leg length reference is a Fourier series; the coefficients are
//! tuned by Levenberg-Marquardt on simulated steps so that the pre-impact
//! state repeats and the mass height, its oscillation and the step period hit
//! their targets.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::aslip::{
    simulate_step, ASlipParams, ASlipState, Domain, FixedStep, LegLengthReference, LegRole,
    LegState, Side, StepTrace,
};
use crate::error::{Error, Result};
use crate::hlip::HlipParams;
use crate::SCHEMA_VERSION;

/// What the synthesized gait should look like.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitSpec {
    pub z0_target: f64,
    /// Peak-to-peak vertical oscillation of the mass.
    pub osc_amp: f64,
    pub t_step: f64,
    /// Nominal single-support (swing) duration.
    pub t_ssp: f64,
    pub n_coef: usize,
}

impl Default for GaitSpec {
    fn default() -> Self {
        Self {
            z0_target: 1.0,
            osc_amp: 0.05,
            t_step: 0.35,
            t_ssp: 0.3,
            n_coef: 9,
        }
    }
}

impl GaitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.z0_target > 0.0
            && self.osc_amp >= 0.0
            && self.t_step > 0.0
            && self.t_ssp > 0.0
            && self.t_ssp < self.t_step
            && self.n_coef >= 3;
        if !ok
            || ![self.z0_target, self.osc_amp, self.t_step, self.t_ssp]
                .iter()
                .all(|v| v.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "invalid gait spec {self:?}"
            )));
        }
        if self.osc_amp > 0.25 * self.z0_target {
            return Err(Error::InvalidParameter(format!(
                "oscillation {} m is not small against the height {} m",
                self.osc_amp, self.z0_target
            )));
        }
        Ok(())
    }

    fn harmonics(&self) -> usize {
        (self.n_coef - 1) / 2
    }
}

/// Periodic leg-length reference plus everything measured on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitTrajectory {
    pub schema_version: u32,
    pub basis: String,
    pub reference: LegLengthReference,
    /// Nominal swing duration; single support always lasts this long.
    pub t_ssp: f64,
    /// Measured double-support duration.
    pub t_dsp: f64,
    /// Time-averaged mass height over one step.
    pub z0_avg: f64,
    /// Measured peak-to-peak height oscillation.
    pub oscillation: f64,
    /// Periodic pre-impact state, left foot in stance.
    pub initial: ASlipState,
    pub hlip: HlipParams,
}

impl GaitTrajectory {
    pub fn step_period(&self) -> f64 {
        self.t_ssp + self.t_dsp
    }

    /// Desired `(L, Ldot, Lddot)` for a leg role `t` seconds after touchdown.
    pub fn leg_reference(&self, role: LegRole, t: f64) -> (f64, f64, f64) {
        self.reference.role(role, t)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        crate::check_schema(&value)?;
        Ok(serde_json::from_value(value)?)
    }

    /// Same gait with the pre-impact state moved so the stance foot sits at
    /// `foot` (ground plane).
    pub fn initial_at(&self, foot: [f64; 2]) -> ASlipState {
        let mut s = self.initial;
        let shift = Vector3::new(foot[0], foot[1], 0.0);
        s.pos += shift;
        s.left.foot += shift;
        s.right.foot += shift;
        s.swing_start += shift;
        s.swing_target += shift;
        s
    }
}

/// Outcome of a synthesis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitSearchResult {
    pub gait: GaitTrajectory,
    /// Pre-impact periodicity residual of the final replayed step.
    pub residual: f64,
    pub iterations: usize,
    /// Final weighted residual norm of the least-squares problem.
    pub cost: f64,
}

/// Periodicity threshold on the pre-impact state.
pub const PERIODICITY_TOLERANCE: f64 = 1e-3;
const WARMUP_STEPS: usize = 20;
const TIKHONOV: f64 = 1e-3;
const MAX_LM_ITERATIONS: usize = 60;
const SYMMETRY_WEIGHT: f64 = 1.0;
const IMPACT_WEIGHT: f64 = 1.0;

/// A stepping-in-place pre-impact state with both feet under the mass.
pub fn in_place_state(
    reference: &LegLengthReference,
    t_ssp: f64,
    height: f64,
    vertical_velocity: f64,
    params: &ASlipParams,
) -> ASlipState {
    let t_step = reference.half_period;
    let (l_st, ld_st, _) = reference.role(LegRole::Stance, t_step);
    let (l_sw, ld_sw, _) = reference.role(LegRole::Swing, t_step);
    let mut left = LegState::standing(Vector3::zeros(), l_st);
    left.length_rate = ld_st;
    let mut right = LegState::standing(Vector3::zeros(), l_sw);
    right.length_rate = ld_sw;
    right.in_contact = false;
    right.foot_vel = Vector3::new(0.0, 0.0, -8.0 * params.swing_clearance / t_ssp);
    let mut state = ASlipState {
        time: 0.0,
        pos: Vector3::new(0.0, 0.0, height),
        vel: Vector3::new(0.0, 0.0, vertical_velocity),
        left,
        right,
        domain: Domain::Ssp(Side::Left),
        t_domain: t_ssp,
        t_step,
        step_index: 0,
        swing_start: Vector3::zeros(),
        swing_target: Vector3::zeros(),
    };
    // Keep the stance spring state consistent with the geometry.
    let _ = crate::aslip::dynamics::update_deformations(&mut state);
    state
}

/// Bare gait used while searching; H-LIP fields are placeholders until the
/// gait is measured.
fn provisional(
    reference: LegLengthReference,
    spec: &GaitSpec,
    initial: ASlipState,
) -> GaitTrajectory {
    GaitTrajectory {
        schema_version: SCHEMA_VERSION,
        basis: "fourier".into(),
        reference,
        t_ssp: spec.t_ssp,
        t_dsp: spec.t_step - spec.t_ssp,
        z0_avg: spec.z0_target,
        oscillation: spec.osc_amp,
        initial,
        hlip: HlipParams {
            z0: spec.z0_target,
            g: 9.81,
            t_ssp: spec.t_ssp,
            t_dsp: spec.t_step - spec.t_ssp,
        },
    }
}

/// Measured statistics of one simulated step.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StepStats {
    mean_height: f64,
    oscillation: f64,
    period: f64,
    t_dsp: f64,
    min_force: f64,
    min_length: f64,
    max_length: f64,
    /// Vertical velocity at liftoff plus that at the end of the step.
    asymmetry: f64,
}

fn step_stats(trace: &StepTrace) -> StepStats {
    let samples = &trace.samples;
    let mut integral = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut min_force = f64::INFINITY;
    let mut min_length = f64::INFINITY;
    let mut max_length = f64::NEG_INFINITY;
    for w in samples.windows(2) {
        integral += 0.5 * (w[0].pos[2] + w[1].pos[2]) * (w[1].t - w[0].t);
    }
    for s in samples {
        lo = lo.min(s.pos[2]);
        hi = hi.max(s.pos[2]);
        min_force = min_force.min(s.force_z[0]).min(s.force_z[1]);
        for l in s.length {
            min_length = min_length.min(l);
            max_length = max_length.max(l);
        }
    }
    let liftoff = samples
        .iter()
        .find(|s| matches!(s.domain, Domain::Ssp(_)))
        .map(|s| s.vel[2])
        .unwrap_or(0.0);
    let touchdown = samples.last().map(|s| s.vel[2]).unwrap_or(0.0);
    let duration =
        samples.last().map(|s| s.t).unwrap_or(0.0) - samples.first().map(|s| s.t).unwrap_or(0.0);
    StepStats {
        mean_height: integral / duration.max(f64::MIN_POSITIVE),
        oscillation: hi - lo,
        period: trace.t_dsp + trace.t_ssp,
        t_dsp: trace.t_dsp,
        min_force,
        min_length,
        max_length,
        asymmetry: liftoff + touchdown,
    }
}

fn periodicity(a: &ASlipState, b: &ASlipState) -> f64 {
    // Legs swap roles every step; compare stance-to-stance.
    let stance_a = a.leg(a.domain.stance());
    let stance_b = b.leg(b.domain.stance());
    let swing_a = a.leg(a.domain.stance().other());
    let swing_b = b.leg(b.domain.stance().other());
    let d = [
        a.pos.z - b.pos.z,
        a.vel.z - b.vel.z,
        stance_a.length - stance_b.length,
        stance_a.length_rate - stance_b.length_rate,
        swing_a.length_rate - swing_b.length_rate,
        a.horizontal()[0] - b.horizontal()[0],
        a.horizontal()[1] - b.horizontal()[1],
        a.horizontal()[2] - b.horizontal()[2],
        a.horizontal()[3] - b.horizontal()[3],
    ];
    d.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Spring deformation rate of the touching-down leg right after impact.
fn impact_rate(pre_impact: &ASlipState) -> Result<f64> {
    let post = crate::aslip::impact_map(pre_impact)?;
    Ok(post.leg(post.domain.stance()).deformation_rate)
}

/// Replays `steps` in-place steps and returns the final state and traces.
fn replay(
    gait: &GaitTrajectory,
    params: &ASlipParams,
    start: &ASlipState,
    steps: usize,
) -> Result<(ASlipState, Vec<StepTrace>)> {
    let mut state = *start;
    let mut traces = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (next, trace) = simulate_step(&state, &FixedStep([0.0, 0.0]), gait, params)?;
        traces.push(trace);
        state = normalize_in_place(&next);
    }
    Ok((state, traces))
}

/// Relabels a stepping-in-place pre-impact state so the left leg is in
/// stance and time restarts at zero.
fn normalize_in_place(state: &ASlipState) -> ASlipState {
    let mut s = *state;
    if s.domain.stance() == Side::Right {
        std::mem::swap(&mut s.left, &mut s.right);
        s.domain = Domain::Ssp(Side::Left);
    }
    s.time = 0.0;
    s.step_index = 0;
    s
}

struct Evaluation {
    residuals: DVector<f64>,
    settled: ASlipState,
    stats: StepStats,
    periodicity: f64,
}

fn evaluate(
    coefficients: &[f64],
    spec: &GaitSpec,
    params: &ASlipParams,
    start: &ASlipState,
) -> Result<Evaluation> {
    let reference = LegLengthReference {
        half_period: spec.t_step,
        coefficients: coefficients.to_vec(),
    };
    let gait = provisional(reference.clone(), spec, *start);
    let mut seed = *start;
    // Leg states follow the current reference.
    let (l_st, ld_st, _) = reference.role(LegRole::Stance, spec.t_step);
    let (_, ld_sw, _) = reference.role(LegRole::Swing, spec.t_step);
    seed.left.length = l_st;
    seed.left.length_rate = ld_st;
    seed.right.length_rate = ld_sw;
    crate::aslip::dynamics::update_deformations(&mut seed)?;

    let (settled, _) = replay(&gait, params, &seed, WARMUP_STEPS)?;
    let (last, traces) = replay(&gait, params, &settled, 1)?;
    let stats = step_stats(&traces[0]);
    let periodicity = periodicity(&settled, &last);

    let (l_td, _, _) = reference.eval(0.0);
    let mut r = vec![
        10.0 * (stats.mean_height - spec.z0_target),
        10.0 * (stats.oscillation - spec.osc_amp),
        10.0 * (stats.period - spec.t_step),
        10.0 * periodicity,
        2.0 * (l_td - last.pos.z),
        SYMMETRY_WEIGHT * stats.asymmetry,
        IMPACT_WEIGHT * impact_rate(&last)?,
    ];
    for j in 1..=spec.harmonics() {
        let scale = TIKHONOV.sqrt() * (j * j) as f64;
        r.push(scale * coefficients[2 * j - 1]);
        r.push(scale * coefficients[2 * j]);
    }
    Ok(Evaluation {
        residuals: DVector::from_vec(r),
        settled: last,
        stats,
        periodicity,
    })
}

/// Initial coefficients: constant length with double-support sag, plus a
/// small first-harmonic swing retraction and a stance dip.
fn initial_coefficients(spec: &GaitSpec, params: &ASlipParams) -> Vec<f64> {
    let mut c = vec![0.0; 1 + 2 * spec.harmonics()];
    c[0] = spec.z0_target + params.m * params.g / (2.0 * params.k_s);
    if spec.harmonics() >= 1 {
        c[2] = 0.03;
    }
    if spec.harmonics() >= 2 {
        c[3] = 0.01;
    }
    c
}

/// Synthesizes the stepping-in-place gait by Levenberg-Marquardt with a
/// forward-difference Jacobian.
pub fn synthesize_gait(spec: &GaitSpec, params: &ASlipParams) -> Result<GaitSearchResult> {
    spec.validate()?;
    params.validate()?;
    let mut coef = initial_coefficients(spec, params);
    let reference = LegLengthReference {
        half_period: spec.t_step,
        coefficients: coef.clone(),
    };
    let mut start = in_place_state(&reference, spec.t_ssp, spec.z0_target, -0.3, params);

    let mut current =
        evaluate(&coef, spec, params, &start).map_err(|e| Error::SynthesisFailed {
            reason: format!("initial guess does not walk: {e}"),
            residual: f64::INFINITY,
        })?;
    start = current.settled;
    let mut cost = current.residuals.norm_squared();
    let mut mu = 1e-2;
    let mut iterations = 0;
    let n = coef.len();

    while iterations < MAX_LM_ITERATIONS {
        iterations += 1;
        let m = current.residuals.len();
        let mut jac = DMatrix::zeros(m, n);
        for j in 0..n {
            let h = 1e-6 * coef[j].abs().max(1e-2);
            let mut probe = coef.clone();
            probe[j] += h;
            let e = evaluate(&probe, spec, params, &start).map_err(|e| Error::SynthesisFailed {
                reason: format!("Jacobian probe failed: {e}"),
                residual: cost.sqrt(),
            })?;
            jac.set_column(j, &((e.residuals - &current.residuals) / h));
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &current.residuals;
        let mut improved = false;
        for _ in 0..12 {
            let mut lhs = jtj.clone();
            for i in 0..n {
                lhs[(i, i)] += mu * (jtj[(i, i)] + 1e-9);
            }
            let Some(step) = lhs.clone().cholesky().map(|c| c.solve(&(-&jtr))) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = coef.iter().zip(step.iter()).map(|(c, s)| c + s).collect();
            match evaluate(&trial, spec, params, &start) {
                Ok(e) if e.residuals.norm_squared() < cost => {
                    let decrease = cost - e.residuals.norm_squared();
                    coef = trial;
                    cost = e.residuals.norm_squared();
                    start = e.settled;
                    current = e;
                    mu = (mu * 0.3).max(1e-9);
                    improved = true;
                    if decrease < 1e-8 * cost {
                        mu = f64::INFINITY;
                    }
                    break;
                }
                _ => mu *= 10.0,
            }
        }
        if !improved || !mu.is_finite() || jtr.amax() < 1e-12 {
            break;
        }
    }

    let ok = current.periodicity < PERIODICITY_TOLERANCE
        && (current.stats.mean_height - spec.z0_target).abs() < 0.02
        && (current.stats.oscillation - spec.osc_amp).abs() < 0.01
        && current.stats.min_force >= 0.0
        && current.stats.min_length >= params.l_min
        && current.stats.max_length <= params.l_max;
    if !ok {
        return Err(Error::SynthesisFailed {
            reason: format!(
                "targets not met: periodicity {:.2e}, mean height {:.4}, oscillation {:.4}, period {:.4}, min Fz {:.2}",
                current.periodicity,
                current.stats.mean_height,
                current.stats.oscillation,
                current.stats.period,
                current.stats.min_force
            ),
            residual: current.periodicity,
        });
    }

    let reference = LegLengthReference {
        half_period: spec.t_step,
        coefficients: coef,
    };
    let mut gait = provisional(reference, spec, current.settled);
    let hlip = measure_hlip_params(&gait, params)?;
    gait.hlip = hlip;
    gait.t_dsp = hlip.t_dsp;
    gait.z0_avg = hlip.z0;
    gait.oscillation = current.stats.oscillation;
    Ok(GaitSearchResult {
        gait,
        residual: current.periodicity,
        iterations,
        cost: cost.sqrt(),
    })
}

/// Replays two in-place steps (one per stance leg) and measures the H-LIP
/// parameters: mean mass height and mean domain durations.
pub fn measure_hlip_params(gait: &GaitTrajectory, params: &ASlipParams) -> Result<HlipParams> {
    let mut state = gait.initial;
    let mut integral = 0.0;
    let mut duration = 0.0;
    let mut t_ssp = 0.0;
    let mut t_dsp = 0.0;
    let steps = 2;
    for _ in 0..steps {
        let (next, trace) = simulate_step(&state, &FixedStep([0.0, 0.0]), gait, params)?;
        for w in trace.samples.windows(2) {
            integral += 0.5 * (w[0].pos[2] + w[1].pos[2]) * (w[1].t - w[0].t);
            duration += w[1].t - w[0].t;
        }
        t_ssp += trace.t_ssp;
        t_dsp += trace.t_dsp;
        state = next;
    }
    HlipParams::new(
        integral / duration,
        params.g,
        t_ssp / steps as f64,
        t_dsp / steps as f64,
    )
}

/// Per-step statistics of an in-place replay, exposed for checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub steps: usize,
    /// Largest pre-impact deviation from the gait's periodic state.
    pub max_drift: f64,
    pub mean_height: f64,
    pub oscillation: f64,
    pub min_vertical_force: f64,
    pub min_length: f64,
    pub max_length: f64,
}

/// Replays the gait in place for `steps` steps.
pub fn replay_report(
    gait: &GaitTrajectory,
    params: &ASlipParams,
    steps: usize,
) -> Result<ReplayReport> {
    let mut state = gait.initial;
    let mut report = ReplayReport {
        steps,
        max_drift: 0.0,
        mean_height: 0.0,
        oscillation: 0.0,
        min_vertical_force: f64::INFINITY,
        min_length: f64::INFINITY,
        max_length: f64::NEG_INFINITY,
    };
    let mut heights = 0.0;
    for _ in 0..steps {
        let (next, trace) = simulate_step(&state, &FixedStep([0.0, 0.0]), gait, params)?;
        let stats = step_stats(&trace);
        heights += stats.mean_height;
        report.oscillation = report.oscillation.max(stats.oscillation);
        report.min_vertical_force = report.min_vertical_force.min(stats.min_force);
        report.min_length = report.min_length.min(stats.min_length);
        report.max_length = report.max_length.max(stats.max_length);
        let normalized = normalize_in_place(&next);
        report.max_drift = report
            .max_drift
            .max(periodicity(&gait.initial, &normalized));
        state = next;
    }
    report.mean_height = heights / steps.max(1) as f64;
    Ok(report)
}

#[cfg(test)]
pub(crate) mod fixture {
    use super::GaitTrajectory;

    /// The shipped stepping-in-place gait.
    pub fn gait() -> GaitTrajectory {
        GaitTrajectory::from_json(include_str!("../../../scenarios/gait.json"))
            .expect("shipped gait parses")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spec_validation() {
        assert!(GaitSpec::default().validate().is_ok());
        let bad = [
            GaitSpec {
                osc_amp: -0.01,
                ..GaitSpec::default()
            },
            GaitSpec {
                t_ssp: 0.4,
                ..GaitSpec::default()
            },
            GaitSpec {
                n_coef: 2,
                ..GaitSpec::default()
            },
            GaitSpec {
                z0_target: f64::NAN,
                ..GaitSpec::default()
            },
            GaitSpec {
                osc_amp: 0.5,
                ..GaitSpec::default()
            },
        ];
        for spec in bad {
            assert!(
                matches!(spec.validate(), Err(Error::InvalidParameter(_))),
                "{spec:?}"
            );
        }
    }

    #[test]
    fn initial_guess_sags_by_half_the_weight() {
        let spec = GaitSpec::default();
        let params = ASlipParams::default();
        let c = initial_coefficients(&spec, &params);
        assert_eq!(c.len(), spec.n_coef);
        assert_relative_eq!(c[0], 1.0 + 100.0 * 9.81 / 48_000.0, epsilon = 1e-12);
    }

    #[test]
    fn json_round_trip_and_shift() {
        let gait = fixture::gait();
        let back = GaitTrajectory::from_json(&gait.to_json().unwrap()).unwrap();
        assert_eq!(back, gait);
        let moved = gait.initial_at([1.0, -2.0]);
        assert_relative_eq!(moved.pos.x - gait.initial.pos.x, 1.0);
        assert_relative_eq!(moved.left.foot.y - gait.initial.left.foot.y, -2.0);
        assert_eq!(moved.horizontal(), gait.initial.horizontal());
    }

    #[test]
    fn rejects_unknown_schema() {
        let text = fixture::gait().to_json().unwrap().replacen(
            "\"schema_version\": 1",
            "\"schema_version\": 9",
            1,
        );
        assert!(matches!(
            GaitTrajectory::from_json(&text),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn measured_period_is_partitioned() {
        let gait = fixture::gait();
        let params = ASlipParams::default();
        let hlip = measure_hlip_params(&gait, &params).unwrap();
        assert_relative_eq!(hlip.t_ssp, gait.t_ssp, epsilon = 1e-6);
        assert_relative_eq!(hlip.t_ssp + hlip.t_dsp, 0.35, epsilon = 1e-3);
        assert!((hlip.z0 - 1.0).abs() < 0.02);
        assert_relative_eq!(
            hlip.lambda() * hlip.lambda() * hlip.z0,
            hlip.g,
            epsilon = 1e-12
        );
    }

    #[test]
    fn replay_respects_constraints() {
        let params = ASlipParams::default();
        let r = replay_report(&fixture::gait(), &params, 6).unwrap();
        assert!(r.min_vertical_force >= 0.0);
        assert!(r.min_length >= params.l_min && r.max_length <= params.l_max);
        assert!(r.max_drift < PERIODICITY_TOLERANCE, "{}", r.max_drift);
        assert!((r.oscillation - 0.05).abs() < 0.01);
    }

    #[test]
    fn step_stats_measure_a_known_trace() {
        let params = ASlipParams::default();
        let gait = fixture::gait();
        let (_, trace) =
            simulate_step(&gait.initial, &FixedStep([0.0, 0.0]), &gait, &params).unwrap();
        let stats = step_stats(&trace);
        assert_relative_eq!(stats.period, trace.t_dsp + trace.t_ssp);
        let lo = trace
            .samples
            .iter()
            .map(|s| s.pos[2])
            .fold(f64::INFINITY, f64::min);
        assert!(stats.mean_height > lo && stats.oscillation > 0.0);
    }
}
