#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use slipwalk::aslip::ASlipParams;
use slipwalk::gait::{synthesize_gait, GaitSearchResult, GaitSpec, GaitTrajectory};
use slipwalk::hlip::{ExtendedS2S, HlipParams};

/// Gait synthesized once per test binary with the default spec.
pub fn synthesized() -> &'static GaitSearchResult {
    static GAIT: OnceLock<GaitSearchResult> = OnceLock::new();
    GAIT.get_or_init(|| {
        synthesize_gait(&GaitSpec::default(), &ASlipParams::default())
            .expect("default gait synthesizes")
    })
}

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn scenarios_dir() -> PathBuf {
    repo_root().join("scenarios")
}

pub fn shipped_gait() -> GaitTrajectory {
    let text = std::fs::read_to_string(scenarios_dir().join("gait.json")).unwrap();
    GaitTrajectory::from_json(&text).unwrap()
}

/// Step-to-step map of the H-LIP built by composing the phase flows:
/// double support at constant velocity, foot switch, single support.
pub fn oracle_s2s(h: &HlipParams) -> (Matrix2<f64>, Vector2<f64>) {
    let lambda = (h.g / h.z0).sqrt();
    let (ch, sh) = ((lambda * h.t_ssp).cosh(), (lambda * h.t_ssp).sinh());
    let ssp = Matrix2::new(ch, sh / lambda, lambda * sh, ch);
    let dsp = Matrix2::new(1.0, h.t_dsp, 0.0, 1.0);
    (ssp * dsp, -(ssp * Vector2::new(1.0, 0.0)))
}

/// Extended map on `[x, p, v]` with `x' = x - p + u + p'`.
pub fn oracle_extended(h: &HlipParams) -> ExtendedS2S {
    let (a, b) = oracle_s2s(h);
    ExtendedS2S {
        a: Matrix3::new(
            1.0,
            a[(0, 0)] - 1.0,
            a[(0, 1)],
            0.0,
            a[(0, 0)],
            a[(0, 1)],
            0.0,
            a[(1, 0)],
            a[(1, 1)],
        ),
        b: Vector3::new(b[0] + 1.0, b[0], b[1]),
    }
}
