//! Walking of a 3D actuated spring-loaded inverted pendulum (aSLIP) by
//! regulating its step size with the hybrid linear inverted pendulum (H-LIP).

pub mod aslip;
pub mod error;
pub mod gait;
pub mod hlip;
pub mod invariant;
pub mod io;
pub mod planner;
pub mod stepping;

pub use error::{Error, Result};

/// Major version written into every serialized artifact.
pub const SCHEMA_VERSION: u32 = 1;

/// Rejects JSON documents whose `schema_version` major differs from ours.
pub fn check_schema(value: &serde_json::Value) -> Result<()> {
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => Ok(()),
        Some(v) => Err(Error::Schema(format!(
            "unsupported schema_version {v}, expected {SCHEMA_VERSION}"
        ))),
        None => Err(Error::Schema("missing schema_version".into())),
    }
}
