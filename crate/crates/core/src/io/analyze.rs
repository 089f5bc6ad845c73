//! Disturbance and invariant-set analysis of a written run directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::records::{read_steps_csv, StepRecord};
use super::run::RunSummary;
use super::svg::{Plot, Series, Style};
use crate::error::{Error, Result};
use crate::hlip::{
    extend_s2s, s2s_matrices, spectral_radius, HlipParams, StepToStep, SteppingGain,
};
use crate::invariant::{
    closed_loop_mismatch, estimate_w, force_band_check, hull, invariance_certificate,
    invariant_set, membership, nilpotency_index, Certificate, ForceBandReport, Polytope,
    DEFAULT_INFLATION,
};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    /// Number of set iterations for `E_n`.
    pub n: usize,
    pub inflation: f64,
    pub membership_tol: f64,
    pub certificate_tol: f64,
    /// Run directory whose `trace.csv` forces serve as the band reference.
    pub force_reference: Option<PathBuf>,
    pub c: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            n: 6,
            inflation: DEFAULT_INFLATION,
            membership_tol: 1e-9,
            certificate_tol: 1e-8,
            force_reference: None,
            c: 0.2,
        }
    }
}

/// Error set analysis of one plane; only present when the run logged a
/// reference to compare against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnalysis {
    pub gain: Vec<f64>,
    pub closed_loop: Vec<Vec<f64>>,
    pub spectral_radius: f64,
    pub nilpotency_index: Option<usize>,
    /// `E` is the exact minimal set rather than the inner approximation `E_n`.
    pub exact: bool,
    pub iterations: usize,
    pub steps: Vec<usize>,
    pub errors: Vec<Vec<f64>>,
    /// `e[k+1] - A_cl e[k]`, the mismatch driving the error.
    pub mismatch: Vec<Vec<f64>>,
    pub w_set: Polytope,
    pub e_set: Polytope,
    pub inside: Vec<bool>,
    pub all_inside: bool,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneAnalysis {
    pub axis: char,
    pub dim: usize,
    /// Model mismatch `x[k+1] - A x[k] - B u[k]` on realized step sizes.
    pub w_samples: Vec<Vec<f64>>,
    pub w_max_norm: f64,
    pub w_hull: Polytope,
    pub error: Option<ErrorAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub schema_version: u32,
    pub source: String,
    pub note: String,
    pub inflation: f64,
    pub hlip: HlipParams,
    pub planes: Vec<PlaneAnalysis>,
    pub all_inside: Option<bool>,
    pub certificates_hold: Option<bool>,
    pub force_band: Option<ForceBandReport>,
}

fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path)
        .map_err(|_| Error::Schema(format!("{} has no summary.json", dir.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    crate::check_schema(&value)?;
    Ok(serde_json::from_value(value)?)
}

fn read_steps(dir: &Path) -> Result<Vec<StepRecord>> {
    let file = fs::File::open(dir.join("steps.csv"))
        .map_err(|_| Error::Schema(format!("{} has no steps.csv", dir.display())))?;
    read_steps_csv(file)
}

/// Vertical leg forces of a written trace, left and right interleaved.
pub fn read_trace_forces(dir: &Path) -> Result<Vec<f64>> {
    let file = fs::File::open(dir.join("trace.csv"))
        .map_err(|_| Error::Schema(format!("{} has no trace.csv", dir.display())))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("trace CSV is missing column `{name}`")))
    };
    let (left, right) = (column("Fz_left")?, column("Fz_right")?);
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        for i in [left, right] {
            let v: f64 = row[i]
                .parse()
                .map_err(|_| Error::Schema(format!("bad force value `{}`", &row[i])))?;
            out.push(v);
        }
    }
    Ok(out)
}

fn plane_map(hlip: &HlipParams, dim: usize) -> Result<Box<dyn StepToStep>> {
    let s2s = s2s_matrices(hlip)?;
    match dim {
        2 => Ok(Box::new(s2s)),
        3 => Ok(Box::new(extend_s2s(&s2s))),
        d => Err(Error::Schema(format!(
            "plane dimension must be 2 or 3, got {d}"
        ))),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn analyze_errors(
    records: &[StepRecord],
    axis: usize,
    dim: usize,
    gain: &[f64],
    map: &dyn StepToStep,
    options: &AnalyzeOptions,
) -> Result<Option<ErrorAnalysis>> {
    let extended = dim == 3;
    let mut steps = Vec::new();
    let mut errors = Vec::new();
    for r in records {
        match r.error(axis, extended) {
            Some(e) => {
                if steps.last().is_some_and(|&k: &usize| k + 1 != r.k) {
                    break;
                }
                steps.push(r.k);
                errors.push(e);
            }
            None if steps.is_empty() => continue,
            None => break,
        }
    }
    if errors.len() < 2 {
        return Ok(None);
    }
    if gain.len() != dim {
        return Err(Error::Schema(format!(
            "gain of length {} for a {dim}-state plane",
            gain.len()
        )));
    }
    let a_cl = SteppingGain::given(gain).closed_loop(map)?;
    let mismatch = closed_loop_mismatch(&errors, &a_cl)?;
    let mut cloud = mismatch.clone();
    cloud.push(vec![0.0; dim]);
    let w_set = hull(&cloud, options.inflation)?;
    let e_set = invariant_set(&a_cl, &w_set, options.n)?;
    let nilpotent = nilpotency_index(&a_cl);
    let certificate = invariance_certificate(&a_cl, &e_set, &w_set, options.certificate_tol)?;
    let inside = membership(&e_set, &errors, options.membership_tol);
    Ok(Some(ErrorAnalysis {
        gain: gain.to_vec(),
        closed_loop: a_cl
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        spectral_radius: spectral_radius(&a_cl),
        nilpotency_index: nilpotent,
        exact: nilpotent.is_some_and(|m| m <= options.n),
        iterations: options.n,
        steps,
        all_inside: inside.iter().all(|&b| b),
        inside,
        errors,
        mismatch,
        w_set,
        e_set,
        certificate,
    }))
}

/// Analyzes one plane of a run.
pub fn analyze_plane(
    records: &[StepRecord],
    hlip: &HlipParams,
    axis: usize,
    dim: usize,
    gain: &[f64],
    options: &AnalyzeOptions,
) -> Result<PlaneAnalysis> {
    let map = plane_map(hlip, dim)?;
    let extended = dim == 3;
    let states: Vec<Vec<f64>> = records.iter().map(|r| r.plane(axis, extended)).collect();
    let inputs: Vec<f64> = records.iter().map(|r| r.u(axis)).collect();
    let w_samples = estimate_w(&states, &inputs, map.as_ref())?;
    let w_hull = hull(&w_samples, options.inflation)?;
    let error = analyze_errors(records, axis, dim, gain, map.as_ref(), options)?;
    Ok(PlaneAnalysis {
        axis: if axis == 0 { 'x' } else { 'y' },
        dim,
        w_max_norm: w_samples.iter().map(|w| norm(w)).fold(0.0, f64::max),
        w_samples,
        w_hull,
        error,
    })
}

/// Runs the analysis on the records and summary of a run.
pub fn analyze_records(
    records: &[StepRecord],
    summary: &RunSummary,
    options: &AnalyzeOptions,
) -> Result<Analysis> {
    if records.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least two logged steps, got {}",
            records.len()
        )));
    }
    let planes = (0..2)
        .map(|axis| {
            analyze_plane(
                records,
                &summary.hlip,
                axis,
                summary.plane_dims[axis],
                &summary.gains[axis],
                options,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let with_errors: Vec<&ErrorAnalysis> = planes.iter().filter_map(|p| p.error.as_ref()).collect();
    let any = !with_errors.is_empty();
    Ok(Analysis {
        schema_version: SCHEMA_VERSION,
        source: summary.name.clone(),
        note: "W is estimated from this run only, so E is relative to this scenario".into(),
        inflation: options.inflation,
        hlip: summary.hlip,
        all_inside: any.then(|| with_errors.iter().all(|e| e.all_inside)),
        certificates_hold: any.then(|| with_errors.iter().all(|e| e.certificate.holds)),
        planes,
        force_band: None,
    })
}

fn project(points: &[Vec<f64>]) -> Vec<[f64; 2]> {
    points
        .iter()
        .map(|p| [p[p.len() - 2], p[p.len() - 1]])
        .collect()
}

fn outline(set: &Polytope) -> Result<Vec<[f64; 2]>> {
    let projected: Vec<Vec<f64>> = project(&set.vertices).iter().map(|p| p.to_vec()).collect();
    Ok(project(&Polytope::hull(&projected)?.vertices))
}

/// Scatter of the errors over `E` and `W`, projected on `(p, v)`.
pub fn error_plot(plane: &PlaneAnalysis) -> Result<String> {
    let name = plane.axis;
    let mut plot = Plot::new(
        &format!("error set ({name} plane)"),
        &format!("p_{name} error [m]"),
        &format!("v_{name} error [m/s]"),
    );
    match &plane.error {
        Some(e) => {
            plot = plot
                .with(Series::new("E", outline(&e.e_set)?, Style::Polygon))
                .with(Series::new("W", outline(&e.w_set)?, Style::Polygon))
                .with(Series::new("e", project(&e.errors), Style::Points));
        }
        None => {
            plot = plot
                .with(Series::new(
                    "W hull",
                    outline(&plane.w_hull)?,
                    Style::Polygon,
                ))
                .with(Series::new("w", project(&plane.w_samples), Style::Points));
        }
    }
    Ok(plot.render())
}

/// Reads `summary.json` and `steps.csv` from `dir`, writes `analysis.json`
/// and the error-set plots there and returns the analysis.
pub fn cmd_analyze(dir: &Path, options: &AnalyzeOptions) -> Result<Analysis> {
    let summary = read_summary(dir)?;
    let records = read_steps(dir)?;
    let mut analysis = analyze_records(&records, &summary, options)?;
    if let Some(reference) = &options.force_reference {
        let f = read_trace_forces(dir)?;
        let f_ref = read_trace_forces(reference)?;
        analysis.force_band = Some(force_band_check(&f, &f_ref, options.c)?);
    }
    fs::write(
        dir.join("analysis.json"),
        serde_json::to_string_pretty(&analysis)?,
    )?;
    for plane in &analysis.planes {
        fs::write(
            dir.join(format!("error_{}.svg", plane.axis)),
            error_plot(plane)?,
        )?;
    }
    Ok(analysis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hlip::{deadbeat_gain, p1_orbit};
    use crate::io::ScenarioKind;
    use nalgebra::Vector2;

    fn params() -> HlipParams {
        HlipParams::new(1.0, 9.81, 0.3, 0.05).unwrap()
    }

    fn summary(gain: Vec<f64>) -> RunSummary {
        RunSummary {
            schema_version: SCHEMA_VERSION,
            name: "synthetic".into(),
            kind: ScenarioKind::Periodic3d,
            seed: 0,
            steps_requested: 10,
            steps_completed: 10,
            failure: None,
            hlip: params(),
            plane_dims: [2, 2],
            gains: [gain.clone(), gain],
            u_max: 0.5,
            mean_velocity: [0.0; 2],
            net_displacement: [0.0; 2],
            final_position: [0.0; 2],
            final_velocity: [0.0; 2],
            height_mean: 1.0,
            height_min: 1.0,
            height_max: 1.0,
        }
    }

    /// H-LIP tracking its own P1 orbit with deadbeat gain, perturbed after
    /// every step.
    fn hlip_records(perturb: f64) -> (Vec<StepRecord>, Vec<f64>) {
        let p = params();
        let s2s = s2s_matrices(&p).unwrap();
        let gain = deadbeat_gain(&s2s).unwrap();
        let orbit = p1_orbit(&p, 0.3).unwrap();
        let mut x = orbit.state();
        let mut out = Vec::new();
        for k in 0..10 {
            let e = x - orbit.state();
            let u = orbit.u_star + gain.apply(&[e[0], e[1]]);
            out.push(StepRecord {
                k,
                t: k as f64 * p.period(),
                stance: if k % 2 == 0 { 'L' } else { 'R' },
                x: 0.0,
                p_x: x[0],
                v_x: x[1],
                y: 0.0,
                p_y: x[0],
                v_y: x[1],
                z: 1.0,
                u_x: u,
                u_y: u,
                ref_x: None,
                ref_p_x: Some(orbit.p_star),
                ref_v_x: Some(orbit.v_star),
                ref_y: None,
                ref_p_y: Some(orbit.p_star),
                ref_v_y: Some(orbit.v_star),
                ref_u_x: Some(orbit.u_star),
                ref_u_y: Some(orbit.u_star),
                w_p_x: None,
                w_v_x: None,
                w_p_y: None,
                w_v_y: None,
            });
            let next = s2s.step2(&x, u);
            x = next
                + Vector2::new(
                    perturb * ((k * 7) % 5) as f64 / 5.0,
                    -perturb * ((k * 3) % 4) as f64 / 4.0,
                );
        }
        (out, gain.k)
    }

    #[test]
    fn hlip_trace_has_degenerate_w_at_origin() {
        let (records, gain) = hlip_records(0.0);
        let a = analyze_records(&records, &summary(gain), &AnalyzeOptions::default()).unwrap();
        for plane in &a.planes {
            assert!(plane.w_max_norm < 1e-12, "{}", plane.w_max_norm);
            let eps = DEFAULT_INFLATION * (1.0 + 1e-9);
            assert!(plane
                .w_hull
                .vertices
                .iter()
                .all(|v| v.iter().all(|c| c.abs() <= eps)));
            let e = plane.error.as_ref().unwrap();
            assert!(e.exact && e.certificate.holds && e.all_inside);
        }
        assert_eq!(a.all_inside, Some(true));
    }

    #[test]
    fn perturbed_trace_stays_inside_exact_set() {
        let (records, gain) = hlip_records(2e-3);
        let a = analyze_records(&records, &summary(gain), &AnalyzeOptions::default()).unwrap();
        for plane in &a.planes {
            assert!(plane.w_max_norm > 1e-4);
            let e = plane.error.as_ref().unwrap();
            assert!(e.all_inside, "{:?}", e.inside);
            assert!(e.certificate.holds, "{:?}", e.certificate);
        }
    }

    #[test]
    fn empty_directory_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_analyze(dir.path(), &AnalyzeOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_step_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let (records, gain) = hlip_records(0.0);
        fs::write(
            dir.path().join("summary.json"),
            serde_json::to_string(&summary(gain)).unwrap(),
        )
        .unwrap();
        let mut buf = Vec::new();
        crate::io::write_steps_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("w_v_y", "zz", 1);
        fs::write(dir.path().join("steps.csv"), text).unwrap();
        let err = cmd_analyze(dir.path(), &AnalyzeOptions::default()).unwrap_err();
        assert!(
            matches!(&err, Error::Schema(m) if m.contains("w_v_y")),
            "{err}"
        );
    }

    #[test]
    fn writes_analysis_and_plots() {
        let dir = tempfile::tempdir().unwrap();
        let (records, gain) = hlip_records(1e-3);
        fs::write(
            dir.path().join("summary.json"),
            serde_json::to_string(&summary(gain)).unwrap(),
        )
        .unwrap();
        let mut buf = Vec::new();
        crate::io::write_steps_csv(&records, &mut buf).unwrap();
        fs::write(dir.path().join("steps.csv"), buf).unwrap();
        let a = cmd_analyze(dir.path(), &AnalyzeOptions::default()).unwrap();
        let text = fs::read_to_string(dir.path().join("analysis.json")).unwrap();
        let back: Analysis = serde_json::from_str(&text).unwrap();
        assert_eq!(back.planes.len(), a.planes.len());
        assert!(dir.path().join("error_x.svg").exists() && dir.path().join("error_y.svg").exists());
    }
}
