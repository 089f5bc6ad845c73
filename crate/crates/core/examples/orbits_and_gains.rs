//! Closed-form H-LIP orbits and the three kinds of stepping gains.
//!
//! `cargo run --example orbits_and_gains`

use slipwalk::hlip::{
    deadbeat_gain, extend_s2s, lqr, p1_orbit, p2_orbit, s2s_matrices, spectral_radius, HlipParams,
    LqrWeights, SteppingGain,
};

fn main() -> slipwalk::Result<()> {
    let hlip = HlipParams::new(1.0, 9.81, 0.3, 0.05)?;
    let s2s = s2s_matrices(&hlip)?;
    println!(
        "lambda = {:.4} 1/s, step period {:.3} s",
        hlip.lambda(),
        hlip.period()
    );
    println!("A = {:.4}B = {:.4}", s2s.a, s2s.b.transpose());

    for v_d in [0.0, 0.3, 0.6] {
        let p1 = p1_orbit(&hlip, v_d)?;
        println!(
            "P1 v_d = {v_d:.1}: p* = {:+.4}, v* = {:+.4}, u* = {:+.4}",
            p1.p_star, p1.v_star, p1.u_star
        );
    }
    let p2 = p2_orbit(&hlip, 0.0, -0.3)?;
    println!(
        "P2 in place: left (p, v, u) = ({:+.4}, {:+.4}, {:+.4}), right = ({:+.4}, {:+.4}, {:+.4})",
        p2.p_star_l, p2.v_star_l, p2.u_star_l, p2.p_star_r, p2.v_star_r, p2.u_star_r
    );

    let deadbeat = deadbeat_gain(&s2s)?;
    let a_cl = deadbeat.closed_loop(&s2s)?;
    println!(
        "\ndeadbeat K = {:.4?}, |A_cl^2|_F = {:.1e}",
        deadbeat.k,
        (&a_cl * &a_cl).norm()
    );

    let solution = lqr(&s2s, &LqrWeights::diagonal(&[1.0, 1.0], 1.0))?;
    println!(
        "LQR K = {:.4?}, rho = {:.4}, DARE residual {:.1e} after {} iterations",
        solution.gain.k,
        spectral_radius(&solution.gain.closed_loop(&s2s)?),
        solution.residual,
        solution.iterations
    );

    let ext = extend_s2s(&s2s);
    let planned = lqr(&ext, &LqrWeights::diagonal(&[10.0, 1.0, 1.0], 1.0))?;
    println!(
        "extended LQR K = {:.4?}, rho = {:.4}",
        planned.gain.k,
        spectral_radius(&planned.gain.closed_loop(&ext)?)
    );
    for k in [[0.21, 0.96, 0.52], [0.31, 0.67, 0.43]] {
        let gain = SteppingGain::given(&k);
        println!(
            "given K = {k:?}, rho = {:.4}",
            spectral_radius(&gain.closed_loop(&ext)?)
        );
    }
    Ok(())
}
