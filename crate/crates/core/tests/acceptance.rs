//! End-to-end acceptance checks, one test per criterion.

mod common;

use std::fs;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slipwalk::aslip::ASlipParams;
use slipwalk::gait::replay_report;
use slipwalk::hlip::{
    deadbeat_gain, lqr, p1_orbit, p2_orbit, s2s_matrices, HlipParams, LqrWeights,
};
use slipwalk::invariant::force_band_check;
use slipwalk::io::{
    analyze_records, read_trace_forces, run_scenario, write_run, AnalyzeOptions, GainChoice,
    GaitSource, RunOutput, Scenario, ScenarioKind,
};
use slipwalk::planner::{solve_plan, PlanPlane, PlanProblem, PlanTarget, TerminalMode};

use common::{oracle_extended, oracle_s2s, synthesized};

fn random_hlip(rng: &mut ChaCha8Rng) -> HlipParams {
    HlipParams::new(
        rng.gen_range(0.5..1.5),
        9.81,
        rng.gen_range(0.2..0.8),
        rng.gen_range(0.0..0.3),
    )
    .unwrap()
}

fn run(kind: ScenarioKind, gain: Option<GainChoice>) -> RunOutput {
    let mut scenario = Scenario::new(kind.label(), kind, GaitSource::File("unused.json".into()));
    scenario.gait = GaitSource::Synthesize(Default::default());
    if let Some(g) = gain {
        scenario.gain = g;
    }
    let out = run_scenario(&scenario, &synthesized().gait).unwrap();
    assert!(out.failure.is_none(), "{:?}", out.failure);
    out
}

#[test]
fn criterion_01_orbit_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases: Vec<_> = (0..100)
        .map(|_| {
            (
                random_hlip(&mut rng),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-0.5..0.5),
            )
        })
        .collect();
    let start = Instant::now();
    let orbits: Vec<_> = cases
        .iter()
        .map(|(h, v, u)| (p1_orbit(h, *v).unwrap(), p2_orbit(h, *v, *u).unwrap()))
        .collect();
    let elapsed = start.elapsed().as_secs_f64();

    let mut worst: f64 = 0.0;
    for ((h, v_d, _), (p1, p2)) in cases.iter().zip(&orbits) {
        let (a, b) = oracle_s2s(h);
        let lambda = (h.g / h.z0).sqrt();
        let half = 0.5 * lambda * h.t_ssp;
        let period = h.t_ssp + h.t_dsp;
        let sigma1 = lambda / half.tanh();
        let sigma2 = lambda * half.tanh();
        let d2 = lambda * lambda / half.cosh().powi(2) * v_d * period
            / (lambda * lambda * h.t_dsp + 2.0 * sigma2);

        let x1 = Vector2::new(p1.p_star, p1.v_star);
        let xl = Vector2::new(p2.p_star_l, p2.v_star_l);
        let xr = Vector2::new(p2.p_star_r, p2.v_star_r);
        let residuals = [
            (a * x1 + b * p1.u_star - x1).norm(),
            (a * xl + b * p2.u_star_l - xr).norm(),
            (a * xr + b * p2.u_star_r - xl).norm(),
            (p1.v_star - sigma1 * p1.p_star).abs(),
            (p2.v_star_l - sigma2 * p2.p_star_l - d2).abs(),
            (p2.v_star_r - sigma2 * p2.p_star_r - d2).abs(),
            (p1.u_star - v_d * period).abs(),
            (p2.u_star_l + p2.u_star_r - 2.0 * v_d * period).abs(),
        ];
        worst = residuals.iter().cloned().fold(worst, f64::max);
    }
    println!("criterion 1: worst residual {worst:.2e}, {elapsed:.4} s");
    assert!(worst < 1e-10);
    assert!(elapsed < 1.0);
}

#[test]
fn criterion_02_deadbeat() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let mut worst_square: f64 = 0.0;
    let mut worst_error: f64 = 0.0;
    for _ in 0..100 {
        let h = random_hlip(&mut rng);
        let gain = deadbeat_gain(&s2s_matrices(&h).unwrap()).unwrap();
        let (a, b) = oracle_s2s(&h);
        let a_cl = a + b * Vector2::new(gain.k[0], gain.k[1]).transpose();
        worst_square = worst_square.max((a_cl * a_cl).norm());
        let mut e = Vector2::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.5..0.5));
        for _ in 0..2 {
            let u = gain.k[0] * e[0] + gain.k[1] * e[1];
            e = a * e + b * u;
        }
        worst_error = worst_error.max(e.norm());
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 2: |A_cl^2|_F <= {worst_square:.2e}, |e_2| <= {worst_error:.2e}, {elapsed:.4} s"
    );
    assert!(worst_square < 1e-10 && worst_error < 1e-10);
    assert!(elapsed < 1.0);
}

fn spectral_radius3(m: &Matrix3<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_03_lqr() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_residual: f64 = 0.0;
    let mut worst_rho: f64 = 0.0;
    for i in 0..100 {
        let h = random_hlip(&mut rng);
        let n = if i % 2 == 0 { 2 } else { 3 };
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = &m * m.transpose() + DMatrix::identity(n, n) * 1e-3;
        let weights = LqrWeights {
            q: q.transpose().as_slice().to_vec(),
            r: rng.gen_range(0.01..2.0),
            n_cross: vec![0.0; n],
        };
        let (a, b) = if n == 2 {
            let (a, b) = oracle_s2s(&h);
            (
                DMatrix::from_iterator(2, 2, a.iter().cloned()),
                DVector::from_iterator(2, b.iter().cloned()),
            )
        } else {
            let e = oracle_extended(&h);
            (
                DMatrix::from_iterator(3, 3, e.a.iter().cloned()),
                DVector::from_iterator(3, e.b.iter().cloned()),
            )
        };
        let solution = if n == 2 {
            lqr(&s2s_matrices(&h).unwrap(), &weights).unwrap()
        } else {
            lqr(
                &slipwalk::hlip::extend_s2s(&s2s_matrices(&h).unwrap()),
                &weights,
            )
            .unwrap()
        };
        let p = &solution.p;
        let s = weights.r + (b.transpose() * p * &b)[(0, 0)];
        let pb = p * &b;
        let rhs = a.transpose() * p * &a - (a.transpose() * &pb) * (pb.transpose() * &a) / s + &q;
        worst_residual = worst_residual.max((p - rhs).amax() / p.amax().max(1.0));
        let k = DMatrix::from_row_slice(1, n, &solution.gain.k);
        let a_cl = &a + &b * k;
        let rho = a_cl
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        worst_rho = worst_rho.max(rho);
    }
    let hlip = synthesized().gait.hlip;
    let ext = oracle_extended(&hlip);
    let fig: Vec<f64> = [[0.21, 0.96, 0.52], [0.31, 0.67, 0.43]]
        .iter()
        .map(|k| spectral_radius3(&(ext.a + ext.b * Vector3::from(*k).transpose())))
        .collect();
    println!(
        "criterion 3: DARE residual <= {worst_residual:.2e}, rho <= {worst_rho:.4}, published gains rho = {fig:.4?} on {hlip:?}"
    );
    assert!(worst_residual < 1e-8);
    assert!(worst_rho < 1.0);
    assert!(fig.iter().all(|r| *r < 1.0));
}

/// Cost of an input sequence by forward simulation of global position,
/// foot offset and velocity.
fn oracle_cost(h: &HlipParams, problem: &PlanProblem, u: &[f64]) -> f64 {
    let (a, b) = oracle_s2s(h);
    let plane = &problem.planes[0];
    let q = Matrix3::from_row_slice(&problem.q);
    let (mut x, mut local) = (plane.x0[0], Vector2::new(plane.x0[1], plane.x0[2]));
    let mut cost = 0.0;
    for (k, uk) in u.iter().enumerate() {
        let next = a * local + b * *uk;
        x = x - local[0] + uk + next[0];
        local = next;
        let e = Vector3::new(x, local[0], local[1]) - Vector3::from(plane.target.at(k + 1));
        cost += e.dot(&(q * e)) + problem.r * uk * uk;
    }
    cost
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    if hi - g[n] > 1e-12 {
        g.push(hi);
    }
    g
}

fn grid_search(bounds: &[(f64, f64)], cost: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut best: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let mut window: Option<f64> = None;
    for step in [0.01, 0.001] {
        let axes: Vec<Vec<f64>> = bounds
            .iter()
            .zip(&best)
            .map(|((lo, hi), c)| match window {
                None => grid(*lo, *hi, step),
                Some(w) => {
                    let start = lo + ((c - w - lo) / step).floor().max(0.0) * step;
                    grid(start, (c + w).min(*hi), step)
                }
            })
            .collect();
        let mut best_cost = f64::INFINITY;
        let mut idx = vec![0usize; axes.len()];
        loop {
            let u: Vec<f64> = idx.iter().zip(&axes).map(|(i, a)| a[*i]).collect();
            let c = cost(&u);
            if c < best_cost {
                best_cost = c;
                best = u;
            }
            let mut d = 0;
            while d < idx.len() {
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == idx.len() {
                break;
            }
        }
        window = Some(3.0 * step);
    }
    best
}

/// Condition number of the cost Hessian, from second differences of the
/// (quadratic) oracle cost.
fn condition(n: usize, cost: impl Fn(&[f64]) -> f64) -> f64 {
    let unit = |i: usize| {
        (0..n)
            .map(|k| if k == i { 1.0 } else { 0.0 })
            .collect::<Vec<f64>>()
    };
    let zero = cost(&vec![0.0; n]);
    let h = DMatrix::from_fn(n, n, |i, j| {
        let both: Vec<f64> = unit(i).iter().zip(unit(j)).map(|(a, b)| a + b).collect();
        cost(&both) - cost(&unit(i)) - cost(&unit(j)) + zero
    });
    let eig = h.symmetric_eigen().eigenvalues;
    eig.max() / eig.min()
}

#[test]
fn criterion_04_qp_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let start = Instant::now();
    let (mut certified, mut sampled) = (0, 0);
    let mut worst_gap: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    while certified < 50 {
        sampled += 1;
        let h = HlipParams::new(
            rng.gen_range(0.8..1.2),
            9.81,
            rng.gen_range(0.25..0.45),
            rng.gen_range(0.0..0.15),
        )
        .unwrap();
        let n = rng.gen_range(1..=3);
        let x0 = [
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-0.6..0.6),
        ];
        let target = if rng.gen_bool(0.5) {
            PlanTarget::Fixed([rng.gen_range(-0.5..0.5), 0.0, 0.0])
        } else {
            PlanTarget::Sampled(
                (1..=n)
                    .map(|k| {
                        [
                            0.1 * k as f64,
                            rng.gen_range(-0.1..0.1),
                            rng.gen_range(-0.4..0.4),
                        ]
                    })
                    .collect(),
            )
        };
        let min_step = rng.gen_bool(0.5).then(|| rng.gen_range(0.0..0.1));
        let q = [
            rng.gen_range(0.1..10.0),
            rng.gen_range(0.1..5.0),
            rng.gen_range(0.1..5.0),
        ];
        let problem = PlanProblem {
            schema_version: slipwalk::SCHEMA_VERSION,
            planes: vec![PlanPlane {
                s2s: oracle_extended(&h),
                x0,
                target,
                min_step,
            }],
            horizon: n,
            u_max: rng.gen_range(0.2..0.5),
            q: [q[0], 0.0, 0.0, 0.0, q[1], 0.0, 0.0, 0.0, q[2]],
            r: rng.gen_range(0.05..2.0),
            terminal: TerminalMode::CostOnly,
            first_step: rng.gen_range(0..2),
        };
        let bounds: Vec<(f64, f64)> = (0..n)
            .map(|k| match min_step {
                None => (-problem.u_max, problem.u_max),
                Some(s) if (problem.first_step + k) % 2 == 0 => (-problem.u_max, -s),
                Some(s) => (s, problem.u_max),
            })
            .collect();
        let cost = |u: &[f64]| oracle_cost(&h, &problem, u);
        let solution = solve_plan(&problem).unwrap();
        let brute = grid_search(&bounds, cost);
        worst_kkt = worst_kkt.max(solution.kkt_residual);
        assert!(
            cost(&solution.u_seq[0]) <= cost(&brute) + 1e-9,
            "solver worse than the grid"
        );
        assert!(solution.u_seq[0]
            .iter()
            .zip(&bounds)
            .all(|(u, (lo, hi))| *u >= lo - 1e-8 && *u <= hi + 1e-8));

        // The grid optimum is within 0.5e-3 sqrt(n kappa) of the true one.
        if 0.5e-3 * (n as f64 * condition(n, cost)).sqrt() > 2e-3 {
            continue;
        }
        certified += 1;
        let gap = solution.u_seq[0]
            .iter()
            .zip(&brute)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_gap = worst_gap.max(gap);
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 4: {certified} grid-certified problems of {sampled} sampled, max |u - u_grid| {worst_gap:.2e}, max KKT residual {worst_kkt:.2e}, {elapsed:.2} s"
    );
    assert!(worst_gap < 2e-3);
    assert!(worst_kkt < 1e-8);
    assert!(elapsed < 30.0);
}

#[test]
fn criterion_05_periodic_gait() {
    let found = synthesized();
    let report = replay_report(&found.gait, &ASlipParams::default(), 20).unwrap();
    println!(
        "criterion 5: oscillation {:.4} m, min Fz {:.2} N, periodicity drift {:.2e}, synthesis residual {:.2e}",
        report.oscillation, report.min_vertical_force, report.max_drift, found.residual
    );
    assert!((report.oscillation - 0.05).abs() <= 0.01);
    assert!(report.min_vertical_force >= 0.0);
    assert!(report.max_drift < 1e-3);
}

#[test]
fn criterion_06_forward_walk() {
    synthesized();
    let params = ASlipParams::default();
    assert_eq!((params.k_s, params.d_s), (24_000.0, 700.0));
    let start = Instant::now();
    let out = run(ScenarioKind::Periodic3d, None);
    let elapsed = start.elapsed().as_secs_f64();
    let v = out.summary.mean_velocity[0];
    let r = &out.records;
    let mut worst: f64 = 0.0;
    for k in 10..r.len() - 1 {
        let sagittal = (r[k + 1].p_x - r[k].p_x).hypot(r[k + 1].v_x - r[k].v_x);
        worst = worst.max(sagittal);
        if k + 2 < r.len() {
            worst = worst.max((r[k + 2].p_y - r[k].p_y).hypot(r[k + 2].v_y - r[k].v_y));
        }
    }
    println!(
        "criterion 6: {} steps, mean forward velocity {v:.4} m/s, largest state change after step 10 {worst:.2e}, {elapsed:.2} s",
        out.summary.steps_completed
    );
    assert_eq!(out.summary.steps_completed, 20);
    assert!((v - 0.3).abs() <= 0.03);
    assert!(worst < 5e-3);
    assert!(elapsed < 60.0);
}

#[test]
fn criterion_07_fixed_location() {
    let out = run(ScenarioKind::FixedLocation, None);
    let last5 = &out.records[out.records.len() - 5..];
    let pos = last5
        .iter()
        .map(|r| (r.x - 1.0).abs().max(r.y.abs()))
        .fold(0.0, f64::max);
    let vel = last5.iter().map(|r| r.v_x.abs()).fold(0.0, f64::max);
    println!("criterion 7: final 5 steps: max position error {pos:.4} m, max |v_x| {vel:.4} m/s");
    assert!(pos <= 0.05);
    assert!(vel < 0.02);
}

#[test]
fn criterion_08_tracking_invariance() {
    let options = AnalyzeOptions::default();
    let lqr = run(ScenarioKind::TrajectoryTracking, None);
    let a = analyze_records(&lqr.records, &lqr.summary, &options).unwrap();
    let db = run(ScenarioKind::TrajectoryTracking, Some(GainChoice::Deadbeat));
    let b = analyze_records(&db.records, &db.summary, &options).unwrap();
    for plane in a.planes.iter().chain(&b.planes) {
        let e = plane.error.as_ref().unwrap();
        println!(
            "criterion 8: gain {:.3?} plane {}: {}/{} errors inside {}, certificate violation {:.2e}",
            e.gain,
            plane.axis,
            e.inside.iter().filter(|b| **b).count(),
            e.inside.len(),
            if e.exact { "E" } else { "E_6" },
            e.certificate.max_violation
        );
    }
    assert_eq!(a.all_inside, Some(true));
    assert!(b.planes.iter().all(|p| p.error.as_ref().unwrap().exact));
    assert_eq!(b.all_inside, Some(true));
    assert_eq!(b.certificates_hold, Some(true));
}

#[test]
fn criterion_09_force_band() {
    let out = run(ScenarioKind::SteppingInPlace, None);
    let dir = tempfile::tempdir().unwrap();
    write_run(&out, dir.path(), false).unwrap();
    let forces = read_trace_forces(dir.path()).unwrap();
    let same = force_band_check(&forces, &forces, 0.2).unwrap();
    let scaled: Vec<f64> = forces.iter().map(|f| 1.3 * f).collect();
    let over = force_band_check(&scaled, &forces, 0.2).unwrap();
    println!(
        "criterion 9: self {}, 1.3x {} with first violation at sample {:?}",
        same.passed, over.passed, over.first_violation
    );
    assert!(same.passed);
    assert!(!over.passed && over.first_violation.is_some());
}

#[test]
fn criterion_10_determinism() {
    let gait = &synthesized().gait;
    for kind in [
        ScenarioKind::Periodic3d,
        ScenarioKind::FixedLocation,
        ScenarioKind::TrajectoryTracking,
        ScenarioKind::SteppingInPlace,
    ] {
        let mut scenario = Scenario::new(
            kind.label(),
            kind,
            GaitSource::Synthesize(Default::default()),
        );
        scenario.seed = 42;
        let mut bytes = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            write_run(&run_scenario(&scenario, gait).unwrap(), dir.path(), false).unwrap();
            bytes.push((
                fs::read(dir.path().join("trace.csv")).unwrap(),
                fs::read(dir.path().join("steps.csv")).unwrap(),
            ));
        }
        println!(
            "criterion 10: {} trace.csv {} bytes",
            kind.label(),
            bytes[0].0.len()
        );
        assert!(
            bytes[0] == bytes[1],
            "{} differs between runs",
            kind.label()
        );
    }
}
