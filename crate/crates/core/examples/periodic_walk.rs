//! Forward P1 / lateral P2 walking of the aSLIP at 0.3 m/s.
//!
//! `cargo run --release --example periodic_walk [gait.json]`

use slipwalk::aslip::{simulate_walk, ASlipParams};
use slipwalk::gait::{synthesize_gait, GaitSpec, GaitTrajectory};
use slipwalk::hlip::{deadbeat_gain, p1_orbit, p2_orbit, s2s_matrices};
use slipwalk::stepping::{compose_3d, PlaneReference, ReferenceMode};

fn main() -> slipwalk::Result<()> {
    let params = ASlipParams::default();
    let gait = match std::env::args().nth(1) {
        Some(path) => GaitTrajectory::from_json(&std::fs::read_to_string(path)?)?,
        None => synthesize_gait(&GaitSpec::default(), &params)?.gait,
    };
    let s2s = s2s_matrices(&gait.hlip)?;
    let gain = deadbeat_gain(&s2s)?;
    let x_plane = PlaneReference::new(
        ReferenceMode::P1(p1_orbit(&gait.hlip, 0.3)?),
        gain.clone(),
        &s2s,
    )?;
    let y_plane = PlaneReference::new(
        ReferenceMode::P2(p2_orbit(&gait.hlip, 0.0, -0.3)?),
        gain,
        &s2s,
    )?;
    let walk = compose_3d(x_plane, y_plane, 0.1)?;

    let traces = simulate_walk(&gait.initial, &gait, &params, &walk, 20)?;
    println!(" k   p_x      v_x      p_y      v_y      u_x      u_y");
    for t in &traces {
        let e = t.end.expect("completed step");
        println!(
            "{:2} {:8.4} {:8.4} {:8.4} {:8.4} {:8.4} {:8.4}",
            e.step_index, e.x[0], e.x[1], e.x[2], e.x[3], e.u[0], e.u[1]
        );
    }
    let first = traces.first().unwrap().start;
    let last = traces.last().unwrap().end.unwrap();
    println!(
        "mean forward velocity {:.4} m/s",
        (last.global[0] - first.global[0]) / (last.time - first.time)
    );
    Ok(())
}
