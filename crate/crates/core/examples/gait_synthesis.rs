//! Synthesizes the stepping-in-place gait and replays it.
//!
//! `cargo run --release --example gait_synthesis [out.json]`

use slipwalk::aslip::ASlipParams;
use slipwalk::gait::{replay_report, synthesize_gait, GaitSpec};

fn main() -> slipwalk::Result<()> {
    let spec = GaitSpec::default();
    let params = ASlipParams::default();
    let result = synthesize_gait(&spec, &params)?;
    let gait = &result.gait;
    println!("coefficients  {:?}", gait.reference.coefficients);
    println!("LM iterations {}", result.iterations);
    println!("periodicity   {:.2e}", result.residual);
    println!("z0 (mean)     {:.4} m", gait.z0_avg);
    println!("oscillation   {:.4} m", gait.oscillation);
    println!("T_SSP, T_DSP  {:.4} s, {:.4} s", gait.t_ssp, gait.t_dsp);

    let report = replay_report(gait, &params, 20)?;
    println!(
        "20-step replay: drift {:.2e}, min vertical force {:.1} N, leg length {:.3}..{:.3} m",
        report.max_drift, report.min_vertical_force, report.min_length, report.max_length
    );
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, gait.to_json()?)?;
        println!("wrote {path}");
    }
    Ok(())
}
