//! Hybrid simulator of the 3D actuated spring-loaded inverted pendulum.

pub mod control;
pub mod dynamics;
pub mod model;
pub mod sim;
pub mod trace;

pub use control::{leg_length_control, swing_foot_reference, LegLengthReference, LegRole};
pub use dynamics::{continuous_dynamics, leg_force, mechanical_energy, vertical_force};
pub use model::{ASlipParams, ASlipState, Domain, LegState, Side};
pub use sim::{
    impact_map, simulate_step, simulate_walk, simulate_walk_partial, FixedStep, StepCommand,
    StepContext,
};
pub use trace::{write_trace_csv, PreImpact, Sample, StepTrace};
