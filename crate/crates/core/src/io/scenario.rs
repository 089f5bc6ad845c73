use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aslip::ASlipParams;
use crate::error::{Error, Result};
use crate::gait::GaitSpec;
use crate::planner::{DEFAULT_HORIZON, DEFAULT_Q, DEFAULT_R};
use crate::stepping::{CompositionKind, DEFAULT_MIN_FOOT_SEPARATION, DEFAULT_U_MAX};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    #[serde(rename = "periodic-3d")]
    Periodic3d,
    FixedLocation,
    TrajectoryTracking,
    SteppingInPlace,
}

impl ScenarioKind {
    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::Periodic3d => "periodic-3d",
            ScenarioKind::FixedLocation => "fixed-location",
            ScenarioKind::TrajectoryTracking => "trajectory-tracking",
            ScenarioKind::SteppingInPlace => "stepping-in-place",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitSource {
    /// Path to a gait JSON file, relative to the scenario file.
    File(PathBuf),
    Synthesize(GaitSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GainChoice {
    Deadbeat,
    /// Diagonal state weights (length 2 for orbit planes, 3 for planned).
    Lqr {
        q: Vec<f64>,
        r: f64,
    },
    Given {
        x: Vec<f64>,
        y: Vec<f64>,
    },
}

impl GainChoice {
    /// LQR weights used by the planned scenarios.
    pub fn planned_default() -> Self {
        GainChoice::Lqr {
            q: vec![10.0, 1.0, 1.0],
            r: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicConfig {
    pub composition: CompositionKind,
    pub v_x: f64,
    #[serde(default)]
    pub v_y: f64,
    /// Lateral step taken from left stance.
    pub u_left_y: f64,
    /// Sagittal step from left stance (P2-P2 only).
    #[serde(default)]
    pub u_left_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub q: [f64; 3],
    pub r: f64,
    /// Lateral distance between the feet of the desired gait.
    pub step_width: f64,
    /// Smallest lateral step magnitude.
    pub min_step: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            q: DEFAULT_Q,
            r: DEFAULT_R,
            step_width: 0.3,
            min_step: DEFAULT_MIN_FOOT_SEPARATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedLocationConfig {
    /// Desired mass position `[x, y]`.
    pub target: [f64; 2],
    #[serde(default)]
    pub planner: PlannerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSource {
    /// CSV with columns `t, x_d, y_d` and optional `vx_d, vy_d`.
    Csv(PathBuf),
    Sinusoid {
        v_x: f64,
        amplitude: f64,
        period: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingConfig {
    pub path: PathSource,
    #[serde(default)]
    pub planner: PlannerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InPlaceConfig {
    /// Stabilize with the stepping controller; otherwise every step is zero.
    pub controller: bool,
}

fn default_steps() -> usize {
    20
}

fn default_u_max() -> f64 {
    DEFAULT_U_MAX
}

fn default_gain() -> GainChoice {
    GainChoice::Deadbeat
}

fn default_stride() -> usize {
    10
}

/// One experiment. Relative paths resolve against the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub aslip: ASlipParams,
    pub gait: GaitSource,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_gain")]
    pub gain: GainChoice,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    /// Keep every n-th time sample in the trace CSV.
    #[serde(default = "default_stride")]
    pub trace_stride: usize,
    #[serde(default)]
    pub periodic: Option<PeriodicConfig>,
    #[serde(default)]
    pub fixed_location: Option<FixedLocationConfig>,
    #[serde(default)]
    pub trajectory: Option<TrackingConfig>,
    #[serde(default)]
    pub stepping_in_place: Option<InPlaceConfig>,
    /// Directory of the scenario file; not serialized.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    /// A scenario of `kind` with the gait read from `gait_file` and default
    /// kind-specific settings.
    pub fn new(name: &str, kind: ScenarioKind, gait: GaitSource) -> Self {
        let mut s = Self {
            schema_version: SCHEMA_VERSION,
            name: name.to_string(),
            kind,
            aslip: ASlipParams::default(),
            gait,
            n_steps: default_steps(),
            seed: 0,
            output_dir: None,
            gain: GainChoice::Deadbeat,
            u_max: DEFAULT_U_MAX,
            trace_stride: default_stride(),
            periodic: None,
            fixed_location: None,
            trajectory: None,
            stepping_in_place: None,
            base_dir: None,
        };
        match kind {
            ScenarioKind::Periodic3d => {
                s.periodic = Some(PeriodicConfig {
                    composition: CompositionKind::P1P2,
                    v_x: 0.3,
                    v_y: 0.0,
                    u_left_y: -0.3,
                    u_left_x: None,
                })
            }
            ScenarioKind::FixedLocation => {
                s.gain = GainChoice::planned_default();
                s.fixed_location = Some(FixedLocationConfig {
                    target: [1.0, 0.0],
                    planner: PlannerConfig::default(),
                })
            }
            ScenarioKind::TrajectoryTracking => {
                s.gain = GainChoice::planned_default();
                s.trajectory = Some(TrackingConfig {
                    path: PathSource::Sinusoid {
                        v_x: 0.3,
                        amplitude: 0.2,
                        period: 6.0,
                    },
                    planner: PlannerConfig::default(),
                })
            }
            ScenarioKind::SteppingInPlace => {
                s.stepping_in_place = Some(InPlaceConfig { controller: false })
            }
        }
        s
    }

    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        crate::check_schema(&value)?;
        let mut s: Scenario = serde_json::from_value(value)?;
        s.base_dir = base_dir.map(Path::to_path_buf);
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidParameter(format!("cannot read scenario {}: {e}", path.display()))
        })?;
        Self::from_json(&text, path.parent())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.aslip.validate()?;
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        if !(self.u_max > 0.0) {
            return Err(Error::InvalidParameter("u_max must be positive".into()));
        }
        match &self.gait {
            GaitSource::File(p) => {
                let p = self.resolve(p);
                if !p.is_file() {
                    return Err(Error::InvalidParameter(format!(
                        "gait file {} does not exist",
                        p.display()
                    )));
                }
            }
            GaitSource::Synthesize(spec) => spec.validate()?,
        }
        let missing = |field: &str| {
            Error::InvalidParameter(format!(
                "{} scenario needs the `{field}` section",
                self.kind.label()
            ))
        };
        match self.kind {
            ScenarioKind::Periodic3d => {
                let p = self.periodic.as_ref().ok_or_else(|| missing("periodic"))?;
                if p.composition == CompositionKind::Planned {
                    return Err(Error::InvalidParameter(
                        "periodic walking composes orbits (p1-p2 or p2-p2)".into(),
                    ));
                }
            }
            ScenarioKind::FixedLocation => {
                let f = self
                    .fixed_location
                    .as_ref()
                    .ok_or_else(|| missing("fixed_location"))?;
                self.check_planner(&f.planner)?;
            }
            ScenarioKind::TrajectoryTracking => {
                let t = self
                    .trajectory
                    .as_ref()
                    .ok_or_else(|| missing("trajectory"))?;
                self.check_planner(&t.planner)?;
                if let PathSource::Csv(p) = &t.path {
                    let p = self.resolve(p);
                    if !p.is_file() {
                        return Err(Error::InvalidParameter(format!(
                            "path file {} does not exist",
                            p.display()
                        )));
                    }
                }
            }
            ScenarioKind::SteppingInPlace => {
                self.stepping_in_place
                    .as_ref()
                    .ok_or_else(|| missing("stepping_in_place"))?;
            }
        }
        Ok(())
    }

    fn check_planner(&self, p: &PlannerConfig) -> Result<()> {
        if p.horizon == 0 || !(p.r > 0.0) || p.q.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::InvalidParameter(
                "planner needs horizon >= 1, r > 0, q >= 0".into(),
            ));
        }
        if !(p.min_step >= 0.0 && p.min_step <= p.step_width && p.step_width < self.u_max) {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= min_step <= step_width < u_max (got {}, {}, {})",
                p.min_step, p.step_width, self.u_max
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for kind in [
            ScenarioKind::Periodic3d,
            ScenarioKind::FixedLocation,
            ScenarioKind::TrajectoryTracking,
            ScenarioKind::SteppingInPlace,
        ] {
            let s = Scenario::new("x", kind, GaitSource::Synthesize(GaitSpec::default()));
            s.validate().unwrap();
            let back = Scenario::from_json(&s.to_json().unwrap(), None).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn kind_section_is_required() {
        let mut s = Scenario::new(
            "x",
            ScenarioKind::FixedLocation,
            GaitSource::Synthesize(GaitSpec::default()),
        );
        s.fixed_location = None;
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("fixed_location"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_gait_file_is_a_validation_error() {
        let s = Scenario::new(
            "x",
            ScenarioKind::Periodic3d,
            GaitSource::File("/nonexistent/gait.json".into()),
        );
        assert_eq!(s.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let text = r#"{"schema_version": 1, "name": "n", "kind": "stepping-in-place",
            "gait": {"file": "g.json"}, "stepping_in_place": {"controller": false}}"#;
        let s = Scenario::from_json(text, Some(Path::new("/data"))).unwrap();
        assert_eq!(s.n_steps, 20);
        assert_eq!(s.gain, GainChoice::Deadbeat);
        assert_eq!(
            s.resolve(Path::new("g.json")),
            PathBuf::from("/data/g.json")
        );
        let wrong = text.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(
            Scenario::from_json(&wrong, None),
            Err(Error::Schema(_))
        ));
    }
}
