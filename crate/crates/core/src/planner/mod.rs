//! Constrained step-size planning on the extended H-LIP map
//! `x[k+1] = A x[k] + B u[k]`, `x = [x, p, v]`.
//!
//! The input sequence is condensed into a dense QP. Inputs are parameterized
//! around a deadbeat feedback, `u[k] = K x[k] + v[k]`, with `v` as the
//! decision variable, which keeps long horizons on the unstable map well
//! conditioned.

mod mpc;
pub mod qp;
mod trajectory;

pub use mpc::{mpc_track, MpcStep, MpcTrack};
pub use qp::{solve_qp, Qp, QpOptions, QpSolution};
pub use trajectory::{lateral_target, read_trajectory_csv, DesiredTrajectory, TrajectorySample};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::aslip::Side;
use crate::error::{Error, Result};
use crate::hlip::{deadbeat_gain, ExtendedS2S};
use crate::SCHEMA_VERSION;

pub const DEFAULT_HORIZON: usize = 10;
pub const DEFAULT_Q: [f64; 3] = [10.0, 1.0, 1.0];
pub const DEFAULT_R: f64 = 0.1;

/// Desired extended states for steps `1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanTarget {
    Fixed([f64; 3]),
    /// One desired state per step of the horizon.
    Sampled(Vec<[f64; 3]>),
}

impl PlanTarget {
    /// Target for step `k` (1-based); sampled targets hold their last value.
    pub fn at(&self, k: usize) -> [f64; 3] {
        match self {
            PlanTarget::Fixed(x) => *x,
            PlanTarget::Sampled(xs) => xs[(k.max(1) - 1).min(xs.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalMode {
    CostOnly,
    /// The last planned state must equal the last target.
    Equality,
}

/// One sagittal or lateral plane of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPlane {
    pub s2s: ExtendedS2S,
    pub x0: [f64; 3],
    pub target: PlanTarget,
    /// Minimum step magnitude; the sign alternates with stance parity (left
    /// stance steps to negative values).
    pub min_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanProblem {
    pub schema_version: u32,
    pub planes: Vec<PlanPlane>,
    pub horizon: usize,
    pub u_max: f64,
    /// State weight, row-major 3x3.
    pub q: [f64; 9],
    pub r: f64,
    pub terminal: TerminalMode,
    /// Step index of the first planned input; fixes the lateral parity.
    pub first_step: usize,
}

impl PlanProblem {
    /// Single-plane problem with the default weights and horizon.
    pub fn single(s2s: ExtendedS2S, x0: [f64; 3], target: PlanTarget) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            planes: vec![PlanPlane {
                s2s,
                x0,
                target,
                min_step: None,
            }],
            horizon: DEFAULT_HORIZON,
            u_max: crate::stepping::DEFAULT_U_MAX,
            q: diag(DEFAULT_Q),
            r: DEFAULT_R,
            terminal: TerminalMode::CostOnly,
            first_step: 0,
        }
    }

    pub fn q_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.planes.is_empty() || self.horizon == 0 {
            return Err(Error::InvalidParameter(
                "plan needs at least one plane and N >= 1".into(),
            ));
        }
        if !(self.u_max > 0.0) || !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need u_max > 0 and R > 0 (got u_max={}, R={})",
                self.u_max, self.r
            )));
        }
        let q = self.q_matrix();
        if !q.iter().all(|v| v.is_finite()) || (q - q.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidParameter(
                "Q must be finite and symmetric".into(),
            ));
        }
        if q.symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::InvalidParameter(
                "Q must be positive semidefinite".into(),
            ));
        }
        for plane in &self.planes {
            if let PlanTarget::Sampled(xs) = &plane.target {
                if xs.len() < self.horizon {
                    return Err(Error::InvalidParameter(format!(
                        "sampled target has {} states for a horizon of {}",
                        xs.len(),
                        self.horizon
                    )));
                }
            }
            if let Some(s) = plane.min_step {
                if !(s >= 0.0 && s <= self.u_max) {
                    return Err(Error::InvalidParameter(format!(
                        "minimum step {s} must lie in [0, u_max]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plan cost of an input sequence per plane, by forward simulation.
    pub fn cost(&self, inputs: &[Vec<f64>]) -> f64 {
        let q = self.q_matrix();
        let mut total = 0.0;
        for (plane, u) in self.planes.iter().zip(inputs) {
            let mut x = Vector3::from(plane.x0);
            for (k, uk) in u.iter().enumerate().take(self.horizon) {
                x = plane.s2s.step3(&x, *uk);
                let e = x - Vector3::from(plane.target.at(k + 1));
                total += e.dot(&(q * e)) + self.r * uk * uk;
            }
        }
        total
    }

    /// Admissible interval of input `k` of `plane`.
    pub fn input_bounds(&self, plane: usize, k: usize) -> (f64, f64) {
        match self.planes[plane].min_step {
            None => (-self.u_max, self.u_max),
            Some(s) => match Side::for_step(self.first_step + k) {
                Side::Left => (-self.u_max, -s),
                Side::Right => (s, self.u_max),
            },
        }
    }
}

fn diag(d: [f64; 3]) -> [f64; 9] {
    [d[0], 0.0, 0.0, 0.0, d[1], 0.0, 0.0, 0.0, d[2]]
}

/// Affine maps of one condensed plane: `X = phi x0 + gamma v` for the states
/// of steps `1..=N` (stacked), `U = psi x0 + lambda v` for the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedPlane {
    pub gain: [f64; 3],
    pub phi: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
}

/// Condensed QP over the stacked `v` of all planes.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedPlan {
    pub qp: Qp,
    /// Cost of the plan equals `qp.objective(v) + constant`.
    pub constant: f64,
    pub planes: Vec<CondensedPlane>,
}

impl CondensedPlan {
    /// Inputs per plane for a decision vector.
    pub fn inputs(&self, v: &DVector<f64>, problem: &PlanProblem) -> Vec<Vec<f64>> {
        let n = problem.horizon;
        self.planes
            .iter()
            .zip(&problem.planes)
            .enumerate()
            .map(|(j, (c, plane))| {
                let x0 = DVector::from_column_slice(&plane.x0);
                let vj = v.rows(j * n, n);
                (&c.psi * x0 + &c.lambda * vj).iter().copied().collect()
            })
            .collect()
    }
}

fn condense_plane(plane: &PlanPlane, n: usize) -> Result<CondensedPlane> {
    let gain = deadbeat_gain(&plane.s2s)?;
    let k = nalgebra::RowVector3::from_row_slice(&gain.k);
    let a_k = plane.s2s.a + plane.s2s.b * k;
    let b = plane.s2s.b;

    let mut powers = vec![Matrix3::identity()];
    for i in 1..=n {
        powers.push(a_k * powers[i - 1]);
    }
    let mut phi = DMatrix::zeros(3 * n, 3);
    let mut gamma = DMatrix::zeros(3 * n, n);
    let mut psi = DMatrix::zeros(n, 3);
    let mut lambda = DMatrix::zeros(n, n);
    for step in 1..=n {
        phi.view_mut((3 * (step - 1), 0), (3, 3))
            .copy_from(&powers[step]);
        for i in 0..step {
            let col = powers[step - 1 - i] * b;
            gamma.view_mut((3 * (step - 1), i), (3, 1)).copy_from(&col);
        }
    }
    for step in 0..n {
        psi.row_mut(step).copy_from(&(k * powers[step]));
        lambda[(step, step)] = 1.0;
        for i in 0..step {
            lambda[(step, i)] = (k * powers[step - 1 - i] * b)[0];
        }
    }
    Ok(CondensedPlane {
        gain: [gain.k[0], gain.k[1], gain.k[2]],
        phi,
        gamma,
        psi,
        lambda,
    })
}

/// Eliminates the states and returns the QP in the decision variables.
pub fn build_plan(problem: &PlanProblem) -> Result<CondensedPlan> {
    problem.validate()?;
    let n = problem.horizon;
    let planes = problem.planes.len();
    let dim = n * planes;
    let q = problem.q_matrix();
    let mut q_bar = DMatrix::zeros(3 * n, 3 * n);
    for step in 0..n {
        q_bar.view_mut((3 * step, 3 * step), (3, 3)).copy_from(&q);
    }

    let mut h = DMatrix::zeros(dim, dim);
    let mut g = DVector::zeros(dim);
    let mut constant = 0.0;
    let mut a_in_rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut a_eq_rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut condensed = Vec::with_capacity(planes);

    for (j, plane) in problem.planes.iter().enumerate() {
        let c = condense_plane(plane, n)?;
        let x0 = DVector::from_column_slice(&plane.x0);
        let mut desired = DVector::zeros(3 * n);
        for step in 1..=n {
            desired
                .rows_mut(3 * (step - 1), 3)
                .copy_from(&Vector3::from(plane.target.at(step)));
        }
        let free = &c.phi * &x0 - desired;
        let u_free = &c.psi * &x0;
        let gq = c.gamma.transpose() * &q_bar;
        let block = (&gq * &c.gamma + c.lambda.transpose() * &c.lambda * problem.r) * 2.0;
        h.view_mut((j * n, j * n), (n, n)).copy_from(&block);
        let gj = (&gq * &free + c.lambda.transpose() * &u_free * problem.r) * 2.0;
        g.rows_mut(j * n, n).copy_from(&gj);
        constant += free.dot(&(&q_bar * &free)) + problem.r * u_free.norm_squared();

        for step in 0..n {
            let (lo, hi) = problem.input_bounds(j, step);
            let mut row = DVector::zeros(dim);
            row.rows_mut(j * n, n)
                .copy_from(&c.lambda.row(step).transpose());
            a_in_rows.push((row.clone(), hi - u_free[step]));
            a_in_rows.push((-row, u_free[step] - lo));
        }
        if problem.terminal == TerminalMode::Equality {
            let last = 3 * (n - 1);
            let target = Vector3::from(plane.target.at(n));
            for r in 0..3 {
                let mut row = DVector::zeros(dim);
                row.rows_mut(j * n, n)
                    .copy_from(&c.gamma.row(last + r).transpose());
                let reach = (c.phi.row(last + r) * &x0)[0];
                a_eq_rows.push((row, target[r] - reach));
            }
        }
        condensed.push(c);
    }

    let stack = |rows: &[(DVector<f64>, f64)]| {
        let mut a = DMatrix::zeros(rows.len(), dim);
        let mut b = DVector::zeros(rows.len());
        for (i, (row, rhs)) in rows.iter().enumerate() {
            a.row_mut(i).copy_from(&row.transpose());
            b[i] = *rhs;
        }
        (a, b)
    };
    let (a_in, b_in) = stack(&a_in_rows);
    let (a_eq, b_eq) = stack(&a_eq_rows);
    // Symmetrize against round-off.
    let h = (&h + h.transpose()) * 0.5;
    Ok(CondensedPlan {
        qp: Qp {
            h,
            g,
            a_eq,
            b_eq,
            a_in,
            b_in,
        },
        constant,
        planes: condensed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSolution {
    pub schema_version: u32,
    /// Step sizes per plane.
    pub u_seq: Vec<Vec<f64>>,
    /// Extended states per plane, `x0` through `x[N]`.
    pub x_seq: Vec<Vec<[f64; 3]>>,
    pub objective: f64,
    pub status: String,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Solves the plan; states are rebuilt by forward simulation of the inputs.
pub fn solve_plan(problem: &PlanProblem) -> Result<PlanSolution> {
    let plan = build_plan(problem)?;
    let sol = solve_qp(&plan.qp, &QpOptions::default())?;
    let mut u_seq = plan.inputs(&sol.x, problem);
    // Rounding can leave the inputs a hair outside their bounds.
    for (j, u) in u_seq.iter_mut().enumerate() {
        for (k, uk) in u.iter_mut().enumerate() {
            let (lo, hi) = problem.input_bounds(j, k);
            *uk = uk.clamp(lo, hi);
        }
    }
    let x_seq = problem
        .planes
        .iter()
        .zip(&u_seq)
        .map(|(plane, u)| {
            let mut x = Vector3::from(plane.x0);
            let mut xs = vec![plane.x0];
            for uk in u {
                x = plane.s2s.step3(&x, *uk);
                xs.push(x.into());
            }
            xs
        })
        .collect();
    Ok(PlanSolution {
        schema_version: SCHEMA_VERSION,
        objective: problem.cost(&u_seq),
        u_seq,
        x_seq,
        status: "optimal".into(),
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
    })
}
