//! Condensed MPC footstep plan to a fixed location and along a moving target.
//!
//! `cargo run --example step_planner`

use slipwalk::hlip::{extend_s2s, s2s_matrices, HlipParams};
use slipwalk::planner::{solve_plan, PlanProblem, PlanTarget, TerminalMode};

fn main() -> slipwalk::Result<()> {
    let hlip = HlipParams::new(1.0, 9.81, 0.3, 0.05)?;
    let ext = extend_s2s(&s2s_matrices(&hlip)?);

    let mut problem =
        PlanProblem::single(ext, [0.0; 3], PlanTarget::Fixed([1.0, 0.0, 0.0]));
    problem.horizon = 8;
    let plan = solve_plan(&problem)?;
    println!(
        "fixed target: status {}, objective {:.4}, KKT residual {:.1e}",
        plan.status, plan.objective, plan.kkt_residual
    );
    for (k, (u, x)) in plan.u_seq[0].iter().zip(&plan.x_seq[0][1..]).enumerate() {
        println!(
            "  {k}: u = {u:+.4}  ->  x = {:+.4}, p = {:+.4}, v = {:+.4}",
            x[0], x[1], x[2]
        );
    }

    problem.terminal = TerminalMode::Equality;
    let plan = solve_plan(&problem)?;
    println!(
        "with terminal equality: final state {:.6?}",
        plan.x_seq[0].last().unwrap()
    );

    let period = hlip.period();
    let ramp: Vec<[f64; 3]> = (1..=10)
        .map(|k| [0.3 * period * k as f64, 0.0, 0.3])
        .collect();
    let mut moving = PlanProblem::single(ext, [0.0; 3], PlanTarget::Sampled(ramp));
    moving.horizon = 10;
    moving.u_max = 0.15;
    let plan = solve_plan(&moving)?;
    println!(
        "\nmoving target with |u| <= {}: steps {:.3?}",
        moving.u_max, plan.u_seq[0]
    );
    Ok(())
}
