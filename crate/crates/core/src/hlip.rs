//! Hybrid linear inverted pendulum (H-LIP): closed-form step-to-step dynamics,
//! periodic orbits and stabilizing step-size gains.
//!
//! The discrete state is sampled at the end of single support (pre-impact) and
//! ordered `[p, v]`: mass position relative to the stance foot and its
//! velocity. The extended state prepends the global mass position: `[x, p, v]`.
//! The input is the step size `u`, the horizontal distance from the current
//! stance foot to the next one.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pendulum height, gravity and the two domain durations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlipParams {
    pub z0: f64,
    pub g: f64,
    pub t_ssp: f64,
    pub t_dsp: f64,
}

impl HlipParams {
    pub fn new(z0: f64, g: f64, t_ssp: f64, t_dsp: f64) -> Result<Self> {
        let params = Self {
            z0,
            g,
            t_ssp,
            t_dsp,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.z0, self.g, self.t_ssp, self.t_dsp]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter(format!(
                "non-finite H-LIP parameters {self:?}"
            )));
        }
        if self.z0 <= 0.0 || self.g <= 0.0 || self.t_ssp <= 0.0 || self.t_dsp < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "H-LIP parameters out of range: z0={}, g={}, t_ssp={}, t_dsp={}",
                self.z0, self.g, self.t_ssp, self.t_dsp
            )));
        }
        Ok(())
    }

    /// Pendulum eigenvalue `sqrt(g / z0)`.
    pub fn lambda(&self) -> f64 {
        (self.g / self.z0).sqrt()
    }

    /// Step period `t_ssp + t_dsp`.
    pub fn period(&self) -> f64 {
        self.t_ssp + self.t_dsp
    }

    /// Slope of the period-1 characteristic line.
    pub fn sigma1(&self) -> f64 {
        let lambda = self.lambda();
        lambda / (0.5 * self.t_ssp * lambda).tanh()
    }

    /// Slope of the period-2 characteristic line.
    pub fn sigma2(&self) -> f64 {
        let lambda = self.lambda();
        lambda * (0.5 * self.t_ssp * lambda).tanh()
    }
}

/// Anything that exposes a linear step-to-step map `x+ = A x + B u`.
pub trait StepToStep {
    fn state_matrix(&self) -> DMatrix<f64>;
    fn input_vector(&self) -> DVector<f64>;

    fn dim(&self) -> usize {
        self.input_vector().len()
    }

    /// Applies the map once.
    fn step(&self, x: &DVector<f64>, u: f64) -> DVector<f64> {
        self.state_matrix() * x + self.input_vector() * u
    }
}

/// Planar H-LIP step-to-step matrices for the state `[p, v]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearS2S {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
}

impl LinearS2S {
    pub fn step2(&self, x: &Vector2<f64>, u: f64) -> Vector2<f64> {
        self.a * x + self.b * u
    }
}

impl StepToStep for LinearS2S {
    fn state_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 2, self.a.as_slice())
    }

    fn input_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(self.b.as_slice())
    }
}

/// Step-to-step matrices for the extended state `[x, p, v]`, where `x` is the
/// global mass position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedS2S {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
}

impl ExtendedS2S {
    pub fn step3(&self, x: &Vector3<f64>, u: f64) -> Vector3<f64> {
        self.a * x + self.b * u
    }

    /// The embedded local map (lower-right block).
    pub fn local(&self) -> LinearS2S {
        LinearS2S {
            a: self.a.fixed_view::<2, 2>(1, 1).into_owned(),
            b: self.b.fixed_rows::<2>(1).into_owned(),
        }
    }
}

impl StepToStep for ExtendedS2S {
    fn state_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(3, 3, self.a.as_slice())
    }

    fn input_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(self.b.as_slice())
    }
}

/// Closed-form S2S matrices: double-support drift, foot switch, then the
/// single-support hyperbolic flow.
pub fn s2s_matrices(params: &HlipParams) -> Result<LinearS2S> {
    params.validate()?;
    let lambda = params.lambda();
    let ch = (params.t_ssp * lambda).cosh();
    let sh = (params.t_ssp * lambda).sinh();
    let td = params.t_dsp;
    let a = Matrix2::new(
        ch,
        td * ch + sh / lambda,
        lambda * sh,
        ch + td * lambda * sh,
    );
    let b = Vector2::new(-ch, -lambda * sh);
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "S2S matrices overflow for t_ssp * lambda = {}",
            params.t_ssp * lambda
        )));
    }
    Ok(LinearS2S { a, b })
}

/// Embeds the local map into the extended `[x, p, v]` map.
pub fn extend_s2s(s2s: &LinearS2S) -> ExtendedS2S {
    let a = &s2s.a;
    let b = &s2s.b;
    ExtendedS2S {
        a: Matrix3::new(
            1.0,
            a[(0, 0)] - 1.0,
            a[(0, 1)],
            0.0,
            a[(0, 0)],
            a[(0, 1)],
            0.0,
            a[(1, 0)],
            a[(1, 1)],
        ),
        b: Vector3::new(b[0] + 1.0, b[0], b[1]),
    }
}

/// Period-1 orbit: one step per cycle, state on `v = sigma1 * p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P1Orbit {
    pub v_d: f64,
    pub p_star: f64,
    pub v_star: f64,
    pub u_star: f64,
    pub sigma1: f64,
}

impl P1Orbit {
    pub fn state(&self) -> Vector2<f64> {
        Vector2::new(self.p_star, self.v_star)
    }
}

pub fn p1_orbit(params: &HlipParams, v_d: f64) -> Result<P1Orbit> {
    params.validate()?;
    let sigma1 = params.sigma1();
    let period = params.period();
    let p_star = v_d * period / (2.0 + params.t_dsp * sigma1);
    Ok(P1Orbit {
        v_d,
        p_star,
        v_star: sigma1 * p_star,
        u_star: v_d * period,
        sigma1,
    })
}

/// Period-2 orbit: alternating set points on `v = sigma2 * p + d2`.
///
/// `*_l` is the set point reached with the left foot in stance, at which the
/// step `u_star_l` is taken; it leads to the `*_r` set point and vice versa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P2Orbit {
    pub v_d: f64,
    pub u_star_l: f64,
    pub u_star_r: f64,
    pub p_star_l: f64,
    pub v_star_l: f64,
    pub p_star_r: f64,
    pub v_star_r: f64,
    pub sigma2: f64,
    pub d2: f64,
}

impl P2Orbit {
    pub fn state_l(&self) -> Vector2<f64> {
        Vector2::new(self.p_star_l, self.v_star_l)
    }

    pub fn state_r(&self) -> Vector2<f64> {
        Vector2::new(self.p_star_r, self.v_star_r)
    }
}

/// Builds the period-2 orbit selected by the left step size.
pub fn p2_orbit(params: &HlipParams, v_d: f64, u_star_l: f64) -> Result<P2Orbit> {
    params.validate()?;
    let lambda = params.lambda();
    let sigma2 = params.sigma2();
    let period = params.period();
    let sech = 1.0 / (0.5 * lambda * params.t_ssp).cosh();
    let d2 = lambda * lambda * sech * sech * v_d * period
        / (lambda * lambda * params.t_dsp + 2.0 * sigma2);
    let u_star_r = 2.0 * v_d * period - u_star_l;
    let denom = 2.0 + params.t_dsp * sigma2;
    let p_star_l = (u_star_l - params.t_dsp * d2) / denom;
    let p_star_r = (u_star_r - params.t_dsp * d2) / denom;
    Ok(P2Orbit {
        v_d,
        u_star_l,
        u_star_r,
        p_star_l,
        v_star_l: sigma2 * p_star_l + d2,
        p_star_r,
        v_star_r: sigma2 * p_star_r + d2,
        sigma2,
        d2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKind {
    Deadbeat,
    Lqr,
    /// Supplied externally (e.g. a published gain).
    Given,
}

/// Row-vector feedback gain `u = K e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteppingGain {
    pub k: Vec<f64>,
    pub kind: GainKind,
}

impl SteppingGain {
    pub fn given(k: &[f64]) -> Self {
        Self {
            k: k.to_vec(),
            kind: GainKind::Given,
        }
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }

    pub fn row(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, self.k.len(), &self.k)
    }

    pub fn apply(&self, e: &[f64]) -> f64 {
        self.k.iter().zip(e).map(|(k, e)| k * e).sum()
    }

    /// `A + B K`.
    pub fn closed_loop<S: StepToStep + ?Sized>(&self, s2s: &S) -> Result<DMatrix<f64>> {
        if s2s.dim() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "gain of length {} does not match a {}-state map",
                self.dim(),
                s2s.dim()
            )));
        }
        Ok(s2s.state_matrix() + s2s.input_vector() * self.row())
    }
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Places every closed-loop eigenvalue at the origin (Ackermann's formula with
/// desired polynomial `z^n`), so `(A + B K)^n = 0`.
pub fn deadbeat_gain<S: StepToStep + ?Sized>(s2s: &S) -> Result<SteppingGain> {
    let a = s2s.state_matrix();
    let b = s2s.input_vector();
    let n = b.len();
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        ctrb.set_column(j, &col);
        col = &a * col;
    }
    let det = ctrb.determinant();
    let scale = ctrb.norm().powi(n as i32).max(f64::MIN_POSITIVE);
    if det.abs() <= 1e-12 * scale {
        return Err(Error::Uncontrollable { det });
    }
    let ctrb_inv = ctrb.try_inverse().ok_or(Error::Uncontrollable { det })?;
    let a_n = a.pow(n as u32);
    let last_row = ctrb_inv.row(n - 1).into_owned();
    let k = -(last_row * a_n);
    Ok(SteppingGain {
        k: k.iter().copied().collect(),
        kind: GainKind::Deadbeat,
    })
}

/// Quadratic weights of the infinite-horizon step cost
/// `sum x'Qx + u'Ru + 2 x'N u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrWeights {
    /// Row-major `n x n`.
    pub q: Vec<f64>,
    pub r: f64,
    pub n_cross: Vec<f64>,
}

impl LqrWeights {
    pub fn diagonal(q: &[f64], r: f64) -> Self {
        let n = q.len();
        let mut full = vec![0.0; n * n];
        for (i, qi) in q.iter().enumerate() {
            full[i * n + i] = *qi;
        }
        Self {
            q: full,
            r,
            n_cross: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n_cross.len()
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_row_slice(n, n, &self.q)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.q.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "Q has {} entries, expected {}",
                self.q.len(),
                n * n
            )));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "R must be positive, got {}",
                self.r
            )));
        }
        let q = self.q_matrix();
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-12 * (1.0 + q.amax()) {
            return Err(Error::InvalidParameter(format!(
                "Q is not symmetric ({asym:.3e})"
            )));
        }
        let mut composite = DMatrix::zeros(n + 1, n + 1);
        composite.view_mut((0, 0), (n, n)).copy_from(&q);
        for i in 0..n {
            composite[(i, n)] = self.n_cross[i];
            composite[(n, i)] = self.n_cross[i];
        }
        composite[(n, n)] = self.r;
        let tol = -1e-10 * (1.0 + composite.amax());
        if q.symmetric_eigenvalues().min() < tol {
            return Err(Error::InvalidParameter(
                "Q is not positive semidefinite".into(),
            ));
        }
        if composite.symmetric_eigenvalues().min() < tol {
            return Err(Error::InvalidParameter(
                "[Q N; N' R] is not positive semidefinite".into(),
            ));
        }
        Ok(())
    }
}

pub const RICCATI_TOLERANCE: f64 = 1e-12;
pub const RICCATI_MAX_ITERATIONS: usize = 10_000;

/// Result of a discrete Riccati solve.
#[derive(Debug, Clone)]
pub struct LqrSolution {
    pub gain: SteppingGain,
    pub p: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn riccati_map(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    q: &DMatrix<f64>,
    r: f64,
    n: &DVector<f64>,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    let at = a.transpose();
    let s = r + (b.transpose() * p * b)[(0, 0)];
    let g = &at * p * b + n;
    &at * p * a - (&g * g.transpose()) / s + q
}

/// Residual `max |P - f(P)|` of the discrete algebraic Riccati equation.
pub fn dare_residual<S: StepToStep + ?Sized>(
    s2s: &S,
    weights: &LqrWeights,
    p: &DMatrix<f64>,
) -> f64 {
    let n = DVector::from_column_slice(&weights.n_cross);
    let next = riccati_map(
        &s2s.state_matrix(),
        &s2s.input_vector(),
        &weights.q_matrix(),
        weights.r,
        &n,
        p,
    );
    (next - p).amax()
}

/// Infinite-horizon LQR gain by fixed-point iteration of the Riccati
/// difference equation started from `P = Q`.
pub fn lqr<S: StepToStep + ?Sized>(s2s: &S, weights: &LqrWeights) -> Result<LqrSolution> {
    weights.validate()?;
    if weights.dim() != s2s.dim() {
        return Err(Error::InvalidParameter(format!(
            "weights of dimension {} for a {}-state map",
            weights.dim(),
            s2s.dim()
        )));
    }
    let a = s2s.state_matrix();
    let b = s2s.input_vector();
    let q = weights.q_matrix();
    let n = DVector::from_column_slice(&weights.n_cross);

    let mut p = q.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < RICCATI_MAX_ITERATIONS {
        let next = riccati_map(&a, &b, &q, weights.r, &n, &p);
        let next = (&next + next.transpose()) * 0.5;
        residual = (&next - &p).amax();
        p = next;
        iterations += 1;
        if !residual.is_finite() {
            break;
        }
        if residual < RICCATI_TOLERANCE * (1.0 + p.amax()) {
            break;
        }
    }
    if !(residual < RICCATI_TOLERANCE * (1.0 + p.amax())) {
        return Err(Error::RiccatiNotConverged {
            iterations,
            residual,
        });
    }
    let s = weights.r + (b.transpose() * &p * &b)[(0, 0)];
    let k = -(b.transpose() * &p * &a + n.transpose()) / s;
    let gain = SteppingGain {
        k: k.iter().copied().collect(),
        kind: GainKind::Lqr,
    };
    let rho = spectral_radius(&gain.closed_loop(s2s)?);
    if rho >= 1.0 {
        return Err(Error::Unstable {
            spectral_radius: rho,
        });
    }
    let residual = dare_residual(s2s, weights, &p);
    Ok(LqrSolution {
        gain,
        p,
        residual,
        iterations,
    })
}

/// Convenience wrapper returning only the gain.
pub fn lqr_gain<S: StepToStep + ?Sized>(s2s: &S, weights: &LqrWeights) -> Result<SteppingGain> {
    lqr(s2s, weights).map(|s| s.gain)
}

/// One application of the planar map.
pub fn hlip_step(x: &Vector2<f64>, u: f64, s2s: &LinearS2S) -> Vector2<f64> {
    s2s.step2(x, u)
}

/// One application of the extended map.
pub fn hlip_step_extended(x: &Vector3<f64>, u: f64, s2s: &ExtendedS2S) -> Vector3<f64> {
    s2s.step3(x, u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HlipDomain {
    Ssp,
    Dsp,
}

/// Closed-form continuous state after `t` seconds in a domain.
pub fn flow_state(x0: &Vector2<f64>, t: f64, lambda: f64, domain: HlipDomain) -> Vector2<f64> {
    match domain {
        HlipDomain::Ssp => {
            let (sh, ch) = ((lambda * t).sinh(), (lambda * t).cosh());
            Vector2::new(
                ch * x0[0] + sh / lambda * x0[1],
                lambda * sh * x0[0] + ch * x0[1],
            )
        }
        HlipDomain::Dsp => Vector2::new(x0[0] + x0[1] * t, x0[1]),
    }
}

/// Samples the closed-form flow at `samples + 1` evenly spaced times in
/// `[0, duration]`.
pub fn hlip_flow(
    x0: &Vector2<f64>,
    duration: f64,
    params: &HlipParams,
    domain: HlipDomain,
    samples: usize,
) -> Result<Vec<(f64, Vector2<f64>)>> {
    params.validate()?;
    if !(duration >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "negative flow duration {duration}"
        )));
    }
    let lambda = params.lambda();
    let samples = samples.max(1);
    Ok((0..=samples)
        .map(|i| {
            let t = duration * i as f64 / samples as f64;
            (t, flow_state(x0, t, lambda, domain))
        })
        .collect())
}
