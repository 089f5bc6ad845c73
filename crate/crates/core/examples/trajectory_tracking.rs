//! Follow a sinusoidal path with MPC-planned references.
//!
//! `cargo run --release --example trajectory_tracking [gait.json] [out_dir]`

use std::path::PathBuf;

use slipwalk::io::{
    load_gait, run_scenario, write_run, GainChoice, GaitSource, Scenario, ScenarioKind,
};

fn main() -> slipwalk::Result<()> {
    let mut args = std::env::args().skip(1);
    let gait_file = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/gait.json")
    });
    let base = Scenario::new(
        "trajectory-tracking",
        ScenarioKind::TrajectoryTracking,
        GaitSource::File(gait_file),
    );
    let gait = load_gait(&base)?;

    for gain in [GainChoice::planned_default(), GainChoice::Deadbeat] {
        let mut scenario = base.clone();
        scenario.gain = gain.clone();
        let run = run_scenario(&scenario, &gait)?;
        let path = run.path.as_ref().expect("tracking scenarios have a path");
        let worst = run
            .records
            .iter()
            .map(|r| {
                let [xd, yd] = path.position(r.t);
                (r.x - xd).hypot(r.y - yd)
            })
            .fold(0.0, f64::max);
        println!(
            "{gain:?}: {} steps, final position [{:.4}, {:.4}] m, largest distance to the path {:.3} m",
            run.summary.steps_completed, run.summary.final_position[0], run.summary.final_position[1], worst
        );
        if let (Some(dir), GainChoice::Lqr { .. }) = (args.next(), &gain) {
            write_run(&run, dir.as_ref(), true)?;
            println!("written to {dir}");
        }
    }
    Ok(())
}
