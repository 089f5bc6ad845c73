//! Mismatch set W, error set E and the invariance certificate of a tracking
//! run, for the deadbeat and the LQR stepping gains.
//!
//! `cargo run --release --example invariant_sets [gait.json]`

use std::path::PathBuf;

use slipwalk::io::{
    analyze_records, load_gait, run_scenario, AnalyzeOptions, GainChoice, GaitSource, Scenario,
    ScenarioKind,
};

fn main() -> slipwalk::Result<()> {
    let gait_file = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/gait.json")
        });
    let base = Scenario::new(
        "trajectory-tracking",
        ScenarioKind::TrajectoryTracking,
        GaitSource::File(gait_file),
    );
    let gait = load_gait(&base)?;
    let options = AnalyzeOptions::default();

    for gain in [GainChoice::Deadbeat, GainChoice::planned_default()] {
        let mut scenario = base.clone();
        scenario.gain = gain.clone();
        let run = run_scenario(&scenario, &gait)?;
        let analysis = analyze_records(&run.records, &run.summary, &options)?;
        println!("{gain:?}");
        for plane in &analysis.planes {
            let Some(e) = &plane.error else { continue };
            println!(
                "  {} plane: rho(A_cl) = {:.3}, {} iterations ({}), |W| {} vertices, |E| {} vertices",
                plane.axis,
                e.spectral_radius,
                e.iterations,
                if e.exact { "exact" } else { "inner approximation" },
                e.w_set.vertices.len(),
                e.e_set.vertices.len()
            );
            println!(
                "    {}/{} errors inside E, certificate {} (worst violation {:.1e})",
                e.inside.iter().filter(|&&b| b).count(),
                e.inside.len(),
                if e.certificate.holds {
                    "holds"
                } else {
                    "fails"
                },
                e.certificate.max_violation
            );
        }
    }
    Ok(())
}
