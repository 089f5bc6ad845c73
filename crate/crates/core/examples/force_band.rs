//! Vertical leg forces of stepping in place checked against a relaxed band.
//!
//! `cargo run --release --example force_band [gait.json]`

use std::path::PathBuf;

use slipwalk::invariant::force_band_check;
use slipwalk::io::{load_gait, run_scenario, GaitSource, Scenario, ScenarioKind};

fn main() -> slipwalk::Result<()> {
    let gait_file = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/gait.json")
        });
    let scenario = Scenario::new(
        "stepping-in-place",
        ScenarioKind::SteppingInPlace,
        GaitSource::File(gait_file),
    );
    let gait = load_gait(&scenario)?;
    let run = run_scenario(&scenario, &gait)?;
    let forces: Vec<f64> = run
        .traces
        .iter()
        .flat_map(|t| t.samples.iter())
        .flat_map(|s| s.force_z)
        .collect();
    let peak = forces.iter().cloned().fold(0.0, f64::max);
    println!("{} force samples, peak {peak:.1} N", forces.len());

    for scale in [1.0, 1.1, 1.3] {
        let scaled: Vec<f64> = forces.iter().map(|f| scale * f).collect();
        let report = force_band_check(&scaled, &forces, 0.2)?;
        println!(
            "x{scale}: {} ({} violations, first at sample {:?})",
            if report.passed { "pass" } else { "fail" },
            report.violations,
            report.first_violation
        );
    }
    Ok(())
}
