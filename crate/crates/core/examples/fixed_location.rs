//! Walk to x = 1 m and stay there, planned by MPC and tracked by the stepping
//! controller.
//!
//! `cargo run --release --example fixed_location [gait.json] [out_dir]`

use std::path::PathBuf;

use slipwalk::io::{load_gait, run_scenario, write_run, GaitSource, Scenario, ScenarioKind};

fn main() -> slipwalk::Result<()> {
    let mut args = std::env::args().skip(1);
    let gait_file = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/gait.json")
    });
    let scenario = Scenario::new(
        "fixed-location",
        ScenarioKind::FixedLocation,
        GaitSource::File(gait_file),
    );
    let gait = load_gait(&scenario)?;
    let run = run_scenario(&scenario, &gait)?;
    if let Some(e) = &run.failure {
        eprintln!("walk stopped early: {e}");
    }

    println!(" k      x       v_x      y       v_y      u_x      u_y");
    for r in &run.records {
        println!(
            "{:2} {:7.4} {:8.4} {:7.4} {:8.4} {:8.4} {:8.4}",
            r.k, r.x, r.v_x, r.y, r.v_y, r.u_x, r.u_y
        );
    }
    println!(
        "final position [{:.4}, {:.4}] m, final velocity [{:.4}, {:.4}] m/s",
        run.summary.final_position[0],
        run.summary.final_position[1],
        run.summary.final_velocity[0],
        run.summary.final_velocity[1]
    );
    if let Some(dir) = args.next() {
        write_run(&run, dir.as_ref(), true)?;
        println!("written to {dir}");
    }
    Ok(())
}
