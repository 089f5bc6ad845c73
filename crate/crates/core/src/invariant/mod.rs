//! Step-to-step mismatch sets, disturbance-invariant error sets and the
//! contact-force band check.

mod polytope;

pub use polytope::{Facet, Polytope};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hlip::{spectral_radius, StepToStep};

/// Default outward inflation of sampled mismatch sets.
pub const DEFAULT_INFLATION: f64 = 1e-4;
/// Samples where the reference force is below this use an absolute band.
pub const FORCE_BAND_FLOOR: f64 = 1.0;

/// Mismatch vectors of one plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSamples {
    pub source: String,
    pub samples: Vec<Vec<f64>>,
}

/// `w[k] = x[k+1] - A x[k] - B u[k]` for consecutive pre-impact states and
/// realized step sizes.
pub fn estimate_w<S: StepToStep + ?Sized>(
    states: &[Vec<f64>],
    inputs: &[f64],
    s2s: &S,
) -> Result<Vec<Vec<f64>>> {
    if states.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least two consecutive steps, got {}",
            states.len()
        )));
    }
    if inputs.len() + 1 < states.len() {
        return Err(Error::InvalidParameter(
            "one step size per transition is required".into(),
        ));
    }
    let n = s2s.dim();
    if states.iter().any(|x| x.len() != n) {
        return Err(Error::InvalidParameter(format!(
            "states must have {n} components"
        )));
    }
    Ok(states
        .windows(2)
        .zip(inputs)
        .map(|(pair, &u)| {
            let x = DVector::from_column_slice(&pair[0]);
            let next = DVector::from_column_slice(&pair[1]);
            (next - s2s.step(&x, u)).iter().copied().collect()
        })
        .collect())
}

/// `e[k+1] - A_cl e[k]`: the mismatch seen by the closed-loop error,
/// including the effect of commanding steps from predicted states.
pub fn closed_loop_mismatch(errors: &[Vec<f64>], a_cl: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    if errors.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two error samples".into(),
        ));
    }
    Ok(errors
        .windows(2)
        .map(|pair| {
            let e = DVector::from_column_slice(&pair[0]);
            let next = DVector::from_column_slice(&pair[1]);
            (next - a_cl * e).iter().copied().collect()
        })
        .collect())
}

/// Polytope over samples, inflated by an `inflation` box. Samples without
/// full affine dimension fall back to their inflated bounding box.
pub fn hull(samples: &[Vec<f64>], inflation: f64) -> Result<Polytope> {
    let raw = Polytope::hull(samples)?;
    if inflation <= 0.0 {
        return Ok(raw);
    }
    let d = raw.dim;
    let eps_box = Polytope::from_box(&vec![-inflation; d], &vec![inflation; d])?;
    if raw.is_full_dimensional() {
        return raw.minkowski_sum(&eps_box);
    }
    let lo: Vec<f64> = (0..d)
        .map(|i| samples.iter().map(|s| s[i]).fold(f64::INFINITY, f64::min) - inflation)
        .collect();
    let hi: Vec<f64> = (0..d)
        .map(|i| {
            samples
                .iter()
                .map(|s| s[i])
                .fold(f64::NEG_INFINITY, f64::max)
                + inflation
        })
        .collect();
    Polytope::from_box(&lo, &hi)
}

/// Smallest `m <= dim` with `A^m = 0`, if any.
pub fn nilpotency_index(a: &DMatrix<f64>) -> Option<usize> {
    let scale = a.norm().max(1.0);
    let mut power = DMatrix::identity(a.nrows(), a.ncols());
    for m in 1..=a.nrows() {
        power = a * power;
        if power.norm() <= 1e-9 * scale.powi(m as i32) {
            return Some(m);
        }
    }
    None
}

/// `E_n = W + A W + ... + A^(n-1) W`. Stops early once `A^i = 0`, in which
/// case the result is the exact minimal invariant set.
pub fn invariant_set(a_cl: &DMatrix<f64>, w: &Polytope, n: usize) -> Result<Polytope> {
    if n == 0 {
        return Err(Error::InvalidParameter("need n >= 1".into()));
    }
    if a_cl.nrows() != w.dim || a_cl.ncols() != w.dim {
        return Err(Error::InvalidParameter(
            "closed loop and W dimensions differ".into(),
        ));
    }
    let nilpotent = nilpotency_index(a_cl);
    let rho = spectral_radius(a_cl);
    if nilpotent.is_none() && !(rho < 1.0) {
        return Err(Error::Unstable {
            spectral_radius: rho,
        });
    }
    let terms = nilpotent.map_or(n, |m| m.min(n));
    let mut e = w.clone();
    let mut term = w.clone();
    for _ in 1..terms {
        term = term.map(a_cl)?;
        e = e.minkowski_sum(&term)?;
    }
    Ok(e)
}

/// Result of checking `A_cl E + W ⊆ E` on vertex pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub holds: bool,
    /// Largest facet violation over all vertex pairs.
    pub max_violation: f64,
    pub tolerance: f64,
}

/// Checks `A_cl v + w ∈ E` for every vertex `v` of `E` and `w` of `W`, which
/// suffices by convexity.
pub fn invariance_certificate(
    a_cl: &DMatrix<f64>,
    e: &Polytope,
    w: &Polytope,
    tol: f64,
) -> Result<Certificate> {
    if !e.is_full_dimensional() {
        let ok = e.vertices.iter().all(|v| {
            let image = a_cl * DVector::from_column_slice(v);
            w.vertices.iter().all(|wv| {
                let p: Vec<f64> = image.iter().zip(wv).map(|(a, b)| a + b).collect();
                e.contains(&p, tol)
            })
        });
        return Ok(Certificate {
            holds: ok,
            max_violation: if ok { 0.0 } else { f64::INFINITY },
            tolerance: tol,
        });
    }
    let mut worst = f64::NEG_INFINITY;
    for v in &e.vertices {
        let image = a_cl * DVector::from_column_slice(v);
        for wv in &w.vertices {
            let p: Vec<f64> = image.iter().zip(wv).map(|(a, b)| a + b).collect();
            worst = worst.max(e.facet_violation(&p));
        }
    }
    Ok(Certificate {
        holds: worst <= tol,
        max_violation: worst,
        tolerance: tol,
    })
}

/// Membership verdicts for a sequence of errors.
pub fn membership(e: &Polytope, errors: &[Vec<f64>], tol: f64) -> Vec<bool> {
    errors.iter().map(|x| e.contains(x, tol)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceBandReport {
    pub passed: bool,
    pub first_violation: Option<usize>,
    pub violations: usize,
    pub c: f64,
}

/// Sample-wise `(1 - c) F_ref < F < (1 + c) F_ref`. Where `F_ref` is below
/// [`FORCE_BAND_FLOOR`] the band is `|F - F_ref| <= c * FORCE_BAND_FLOOR`.
pub fn force_band_check(f: &[f64], f_ref: &[f64], c: f64) -> Result<ForceBandReport> {
    if f.len() != f_ref.len() {
        return Err(Error::InvalidParameter(format!(
            "force series lengths differ ({} vs {})",
            f.len(),
            f_ref.len()
        )));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "relaxation c = {c} must lie in (0, 1)"
        )));
    }
    let inside = |(fz, fr): (&f64, &f64)| {
        if *fr < FORCE_BAND_FLOOR {
            (fz - fr).abs() <= c * FORCE_BAND_FLOOR
        } else {
            (1.0 - c) * fr < *fz && *fz < (1.0 + c) * fr
        }
    };
    let mut first = None;
    let mut violations = 0;
    for (i, pair) in f.iter().zip(f_ref).enumerate() {
        if !inside(pair) {
            violations += 1;
            first.get_or_insert(i);
        }
    }
    Ok(ForceBandReport {
        passed: violations == 0,
        first_violation: first,
        violations,
        c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hlip::{deadbeat_gain, extend_s2s, lqr_gain, s2s_matrices, HlipParams, LqrWeights};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s2s() -> crate::hlip::LinearS2S {
        s2s_matrices(&HlipParams::new(1.0, 9.81, 0.3, 0.05).unwrap()).unwrap()
    }

    fn random_w(rng: &mut ChaCha8Rng, dim: usize, n: usize, scale: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-scale..scale)).collect())
            .collect()
    }

    #[test]
    fn exact_recursion_has_zero_mismatch() {
        let map = s2s();
        let mut x = DVector::from_vec(vec![0.1, 0.2]);
        let inputs = [0.3, 0.25, 0.2, 0.4];
        let mut states = vec![x.iter().copied().collect::<Vec<f64>>()];
        for &u in &inputs {
            x = map.step(&x, u);
            states.push(x.iter().copied().collect());
        }
        let w = estimate_w(&states, &inputs, &map).unwrap();
        assert_eq!(w.len(), 4);
        assert!(w.iter().flatten().all(|v| v.abs() < 1e-14));
        assert!(estimate_w(&states[..1], &inputs, &map).is_err());
    }

    #[test]
    fn collinear_samples_fall_back_to_box() {
        let samples = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![0.5, 1.0]];
        let p = hull(&samples, 0.01).unwrap();
        assert!(p.is_full_dimensional());
        assert_eq!(p.vertices.len(), 4);
        assert!(p.contains(&[1.0, 0.0], 1e-12));
        let p = hull(&[vec![0.0, 0.0]], 1e-4).unwrap();
        assert!(p.contains(&[1e-4, -1e-4], 1e-12) && !p.contains(&[2e-4, 0.0], 1e-9));
    }

    #[test]
    fn zero_closed_loop_gives_w() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = hull(&random_w(&mut rng, 2, 20, 0.01), 0.0).unwrap();
        let e = invariant_set(&DMatrix::zeros(2, 2), &w, 6).unwrap();
        assert_eq!(e, w);
    }

    #[test]
    fn zero_disturbance_gives_origin() {
        let w = Polytope::single(vec![0.0, 0.0, 0.0]).unwrap();
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.2, -0.3]));
        let e = invariant_set(&a, &w, 6).unwrap();
        assert_eq!(e.vertices, vec![vec![0.0, 0.0, 0.0]]);
    }

    #[test]
    fn unstable_closed_loop_is_rejected() {
        let w = Polytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.1, 0.2]));
        assert!(matches!(
            invariant_set(&a, &w, 3),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn deadbeat_set_is_exact_and_invariant() {
        let map = s2s();
        let a_cl = deadbeat_gain(&map).unwrap().closed_loop(&map).unwrap();
        assert_eq!(nilpotency_index(&a_cl), Some(2));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = hull(&random_w(&mut rng, 2, 30, 0.02), DEFAULT_INFLATION).unwrap();
        let e = invariant_set(&a_cl, &w, 6).unwrap();
        let exact = w.minkowski_sum(&w.map(&a_cl).unwrap()).unwrap();
        for v in &e.vertices {
            assert!(exact.contains(v, 1e-12));
        }
        for v in &exact.vertices {
            assert!(e.contains(v, 1e-12));
        }
        let cert = invariance_certificate(&a_cl, &e, &w, 1e-8).unwrap();
        assert!(cert.holds, "{cert:?}");
    }

    #[test]
    fn deadbeat_extended_set_is_invariant() {
        let map = extend_s2s(&s2s());
        let a_cl = deadbeat_gain(&map).unwrap().closed_loop(&map).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = hull(&random_w(&mut rng, 3, 30, 0.02), DEFAULT_INFLATION).unwrap();
        let e = invariant_set(&a_cl, &w, 6).unwrap();
        let cert = invariance_certificate(&a_cl, &e, &w, 1e-8).unwrap();
        assert!(cert.holds, "{cert:?}");
    }

    #[test]
    fn inner_approximation_grows() {
        let map = s2s();
        let a_cl = lqr_gain(&map, &LqrWeights::diagonal(&[1.0, 1.0], 1.0))
            .unwrap()
            .closed_loop(&map)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = hull(&random_w(&mut rng, 2, 30, 0.02), DEFAULT_INFLATION).unwrap();
        let mut previous = invariant_set(&a_cl, &w, 1).unwrap();
        for n in 2..=6 {
            let next = invariant_set(&a_cl, &w, n).unwrap();
            for v in &previous.vertices {
                assert!(next.contains(v, 1e-12), "E_{} not inside E_{n}", n - 1);
            }
            previous = next;
        }
    }

    #[test]
    fn force_band() {
        let f: Vec<f64> = (0..100).map(|i| 900.0 + i as f64).collect();
        assert!(force_band_check(&f, &f, 0.2).unwrap().passed);
        let mut g = f.clone();
        g[37] *= 1.3;
        let report = force_band_check(&g, &f, 0.2).unwrap();
        assert!(!report.passed);
        assert_eq!(report.first_violation, Some(37));
        assert_eq!(report.violations, 1);
        assert!(
            force_band_check(&[0.0, 0.0], &[0.0, 0.0], 0.2)
                .unwrap()
                .passed
        );
        assert!(force_band_check(&[1.0], &[1.0, 2.0], 0.2).is_err());
        assert!(force_band_check(&[1.0], &[1.0], 1.5).is_err());
    }
}
