//! Scenario files, run orchestration, exported records and plots.

pub mod analyze;
pub mod commands;
pub mod records;
pub mod run;
pub mod scenario;
pub mod svg;

pub use analyze::{
    analyze_records, cmd_analyze, read_trace_forces, Analysis, AnalyzeOptions, ErrorAnalysis,
    PlaneAnalysis,
};
pub use commands::{
    cmd_gait, cmd_orbit, cmd_plan, cmd_simulate, output_dir, read_plan_problem, GaitReport,
    OrbitReport,
};
pub use records::{read_steps_csv, write_steps_csv, StepRecord, STEP_COLUMNS};
pub use run::{load_gait, run_scenario, write_run, RunOutput, RunSummary};
pub use scenario::{
    FixedLocationConfig, GainChoice, GaitSource, InPlaceConfig, PathSource, PeriodicConfig,
    PlannerConfig, Scenario, ScenarioKind, TrackingConfig,
};
