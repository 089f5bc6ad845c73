//! Small dense convex QP solver: primal active set with a dense KKT solve.
//!
//! ```text
//! minimize   0.5 x' H x + g' x
//! subject to A_eq x = b_eq,  A_in x <= b_in
//! ```
//! `H` must be positive definite. A feasible start is found by a phase-1
//! problem with one slack variable.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Qp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpOptions {
    pub max_iterations: usize,
    /// Allowed constraint violation of the phase-1 point.
    pub feasibility_tolerance: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            feasibility_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    /// Non-negative at the optimum; zero for inactive rows.
    pub in_multipliers: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl Qp {
    /// Unconstrained problem.
    pub fn new(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    fn check(&self) -> Result<()> {
        let n = self.dim();
        let shapes = self.h.nrows() == n
            && self.h.ncols() == n
            && self.a_eq.ncols() == n
            && self.a_eq.nrows() == self.b_eq.len()
            && self.a_in.ncols() == n
            && self.a_in.nrows() == self.b_in.len();
        if !shapes {
            return Err(Error::Contract("QP matrix shapes do not agree".into()));
        }
        Ok(())
    }

    /// Largest violation of any constraint at `x`.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let eq = (&self.a_eq * x - &self.b_eq).amax();
        let ineq = (&self.a_in * x - &self.b_in).max().max(0.0);
        if self.b_in.is_empty() {
            eq
        } else {
            eq.max(ineq)
        }
    }

    /// Max-norm of the KKT conditions: stationarity, primal and dual
    /// feasibility and complementarity. Terms carrying multipliers are
    /// divided by `max(1, |H|, |g|)` so the residual does not grow with the
    /// magnitude of the cost.
    pub fn kkt_residual(&self, x: &DVector<f64>, nu: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        let scale = 1.0f64.max(self.h.amax()).max(self.g.amax());
        let stationarity =
            &self.h * x + &self.g + self.a_eq.transpose() * nu + self.a_in.transpose() * mu;
        let slack = &self.a_in * x - &self.b_in;
        let mut r = (stationarity.amax() / scale).max(self.violation(x));
        for i in 0..mu.len() {
            r = r.max(-mu[i] / scale).max((mu[i] * slack[i]).abs() / scale);
        }
        r
    }
}

/// Least-norm solution of `A x = b` (zero for no rows).
fn least_norm(a: &DMatrix<f64>, b: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
    if a.nrows() == 0 {
        return Ok(DVector::zeros(n));
    }
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-12 * svd.singular_values.max().max(1.0))
        .map_err(|e| Error::Contract(format!("least-norm solve failed: {e}")))
}

/// Solves the QP. Infeasible constraints yield [`Error::Infeasible`] with
/// the smallest achievable violation.
pub fn solve_qp(qp: &Qp, options: &QpOptions) -> Result<QpSolution> {
    qp.check()?;
    let n = qp.dim();
    let x0 = least_norm(&qp.a_eq, &qp.b_eq, n)?;
    let eq_gap = if qp.b_eq.is_empty() {
        0.0
    } else {
        (&qp.a_eq * &x0 - &qp.b_eq).amax()
    };
    let scale = 1.0
        + qp.b_eq.amax().max(if qp.b_in.is_empty() {
            0.0
        } else {
            qp.b_in.amax()
        });
    if eq_gap > options.feasibility_tolerance * scale {
        return Err(Error::Infeasible { violation: eq_gap });
    }
    let (reduced, basis) = independent_equalities(qp);
    let start = feasible_point(&reduced, x0, options)?;
    let mut sol = active_set(&reduced, start, options)?;
    if let Some(u) = basis {
        sol.eq_multipliers = u * &sol.eq_multipliers;
    }
    sol.kkt_residual = qp.kkt_residual(&sol.x, &sol.eq_multipliers, &sol.in_multipliers);
    Ok(sol)
}

/// Replaces the equality rows by an orthonormal basis of their row space,
/// `U' A_eq x = U' b_eq`; `U` maps the reduced multipliers back.
fn independent_equalities(qp: &Qp) -> (std::borrow::Cow<'_, Qp>, Option<DMatrix<f64>>) {
    let m = qp.a_eq.nrows();
    if m == 0 {
        return (std::borrow::Cow::Borrowed(qp), None);
    }
    let svd = qp.a_eq.clone().svd(true, false);
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank == m {
        return (std::borrow::Cow::Borrowed(qp), None);
    }
    let u = svd.u.expect("left singular vectors requested");
    // Singular values are sorted in decreasing order.
    let u_r = u.columns(0, rank).into_owned();
    let mut reduced = qp.clone();
    reduced.a_eq = u_r.transpose() * &qp.a_eq;
    reduced.b_eq = u_r.transpose() * &qp.b_eq;
    (std::borrow::Cow::Owned(reduced), Some(u_r))
}

/// Phase 1: minimize `t + delta/2 (|x - x0|^2 + t^2)` subject to the
/// equalities, `A_in x - t <= b_in` and `t >= 0`.
fn feasible_point(qp: &Qp, x0: DVector<f64>, options: &QpOptions) -> Result<DVector<f64>> {
    let n = qp.dim();
    let m_in = qp.b_in.len();
    let t0 = if m_in == 0 {
        0.0
    } else {
        (&qp.a_in * &x0 - &qp.b_in).max().max(0.0)
    };
    if t0 <= options.feasibility_tolerance {
        return Ok(x0);
    }
    let delta = 1e-6;
    let h = DMatrix::identity(n + 1, n + 1) * delta;
    let mut g = DVector::zeros(n + 1);
    for i in 0..n {
        g[i] = -delta * x0[i];
    }
    g[n] = 1.0;
    let mut a_eq = DMatrix::zeros(qp.a_eq.nrows(), n + 1);
    a_eq.view_mut((0, 0), (qp.a_eq.nrows(), n))
        .copy_from(&qp.a_eq);
    let mut a_in = DMatrix::zeros(m_in + 1, n + 1);
    a_in.view_mut((0, 0), (m_in, n)).copy_from(&qp.a_in);
    for i in 0..m_in {
        a_in[(i, n)] = -1.0;
    }
    a_in[(m_in, n)] = -1.0;
    let mut b_in = DVector::zeros(m_in + 1);
    b_in.rows_mut(0, m_in).copy_from(&qp.b_in);
    let phase1 = Qp {
        h,
        g,
        a_eq,
        b_eq: qp.b_eq.clone(),
        a_in,
        b_in,
    };
    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(&x0);
    start[n] = t0;
    let sol = active_set(&phase1, start, options)?;
    let t = sol.x[n];
    let x = sol.x.rows(0, n).into_owned();
    let violation = qp.violation(&x);
    if t > options.feasibility_tolerance || violation > options.feasibility_tolerance {
        return Err(Error::Infeasible {
            violation: violation.max(t),
        });
    }
    Ok(x)
}

/// Primal active-set iterations from a feasible `x`.
fn active_set(qp: &Qp, mut x: DVector<f64>, options: &QpOptions) -> Result<QpSolution> {
    let n = qp.dim();
    let m_eq = qp.b_eq.len();
    let m_in = qp.b_in.len();
    let mut working: Vec<usize> = Vec::new();
    let step_tolerance = 1e-13;
    let mut last_residual = f64::INFINITY;
    // Set after a full step: x minimizes over the current working set.
    let mut at_minimum = false;

    for iteration in 1..=options.max_iterations {
        let rows = m_eq + working.len();
        let mut kkt = DMatrix::zeros(n + rows, n + rows);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        let mut constraint = DMatrix::zeros(rows, n);
        constraint.view_mut((0, 0), (m_eq, n)).copy_from(&qp.a_eq);
        for (r, &i) in working.iter().enumerate() {
            constraint.row_mut(m_eq + r).copy_from(&qp.a_in.row(i));
        }
        kkt.view_mut((n, 0), (rows, n)).copy_from(&constraint);
        kkt.view_mut((0, n), (n, rows))
            .copy_from(&constraint.transpose());
        let gradient = &qp.h * &x + &qp.g;
        let mut rhs = DVector::zeros(n + rows);
        rhs.rows_mut(0, n).copy_from(&(-&gradient));
        let z = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Contract("singular KKT system (dependent constraints)".into()))?;
        let p = z.rows(0, n).into_owned();
        let lambda = z.rows(n, rows).into_owned();
        last_residual = gradient.amax();

        if at_minimum || rows >= n || p.amax() <= step_tolerance * (1.0 + x.amax()) {
            // Stationary on the working set: check the inequality multipliers.
            let mut drop: Option<(usize, f64)> = None;
            for (r, _) in working.iter().enumerate() {
                let mu = lambda[m_eq + r];
                if mu < -1e-12 && drop.is_none_or(|(_, best)| mu < best) {
                    drop = Some((r, mu));
                }
            }
            match drop {
                Some((r, _)) => {
                    working.remove(r);
                    at_minimum = false;
                    continue;
                }
                None => {
                    let eq_multipliers = lambda.rows(0, m_eq).into_owned();
                    let mut in_multipliers = DVector::zeros(m_in);
                    for (r, &i) in working.iter().enumerate() {
                        in_multipliers[i] = lambda[m_eq + r].max(0.0);
                    }
                    return Ok(QpSolution {
                        objective: qp.objective(&x),
                        x,
                        eq_multipliers,
                        in_multipliers,
                        iterations: iteration,
                        kkt_residual: 0.0,
                    });
                }
            }
        }

        // Longest feasible step along p.
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..m_in {
            if working.contains(&i) {
                continue;
            }
            let ap = qp.a_in.row(i).dot(&p.transpose());
            if ap > 1e-14 {
                let gap = (qp.b_in[i] - qp.a_in.row(i).dot(&x.transpose())).max(0.0);
                let step = gap / ap;
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }
        x += &p * alpha;
        at_minimum = blocking.is_none();
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    Err(Error::MaxIterations {
        iterations: options.max_iterations,
        residual: last_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn unconstrained_minimizer() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = DVector::from_vec(vec![-1.0, 0.3]);
        let sol = solve_qp(&Qp::new(h.clone(), g.clone()), &QpOptions::default()).unwrap();
        let exact = h.lu().solve(&(-g)).unwrap();
        assert_relative_eq!(sol.x, exact, epsilon = 1e-12);
        assert!(sol.kkt_residual < 1e-12);
    }

    #[test]
    fn box_constrained_1d() {
        let mut qp = Qp::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, -3.0),
        );
        qp.a_in = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        qp.b_in = DVector::from_vec(vec![1.0, 1.0]);
        let sol = solve_qp(&qp, &QpOptions::default()).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(sol.in_multipliers[0], 2.0, epsilon = 1e-12);
        assert!(sol.kkt_residual < 1e-12);
    }

    #[test]
    fn equality_and_infeasible_start() {
        // min |x|^2 s.t. x0 + x1 = 1, x0 >= 0.8
        let mut qp = Qp::new(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2));
        qp.a_eq = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        qp.b_eq = DVector::from_element(1, 1.0);
        qp.a_in = DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]);
        qp.b_in = DVector::from_element(1, -0.8);
        let sol = solve_qp(&qp, &QpOptions::default()).unwrap();
        assert_relative_eq!(sol.x, DVector::from_vec(vec![0.8, 0.2]), epsilon = 1e-12);
        assert!(sol.kkt_residual < 1e-10);
    }

    #[test]
    fn reports_infeasibility() {
        let mut qp = Qp::new(DMatrix::identity(1, 1), DVector::zeros(1));
        qp.a_in = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        qp.b_in = DVector::from_vec(vec![-1.0, -1.0]);
        match solve_qp(&qp, &QpOptions::default()) {
            Err(Error::Infeasible { violation }) => {
                assert_relative_eq!(violation, 1.0, epsilon = 1e-4)
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    fn random_qp(seed: &[f64], n: usize) -> Qp {
        let m = DMatrix::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()]);
        let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
        let g = DVector::from_fn(n, |i, _| seed[(i + 3) % seed.len()] * 3.0);
        let mut qp = Qp::new(h, g);
        let mut a = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            a[(2 * i, i)] = 1.0;
            a[(2 * i + 1, i)] = -1.0;
        }
        qp.a_in = a;
        qp.b_in = DVector::from_element(2 * n, 0.5);
        qp
    }

    proptest! {
        #[test]
        fn optimum_beats_random_feasible_points(
            seed in proptest::collection::vec(-1.0..1.0f64, 16),
            probe in proptest::collection::vec(-0.5..0.5f64, 4),
        ) {
            let qp = random_qp(&seed, 4);
            let sol = solve_qp(&qp, &QpOptions::default()).unwrap();
            prop_assert!(sol.kkt_residual < 1e-8);
            prop_assert!(qp.violation(&sol.x) <= 1e-12);
            let other = DVector::from_vec(probe);
            prop_assert!(sol.objective <= qp.objective(&other) + 1e-12);
        }
    }
}
