//! Discrete-event simulator comparing two ways of assigning tasks to a drone
//! swarm: a cloud controller that pushes missions to the cheapest capable
//! drone, and per-drone agents that pull the first task they can do from a
//! shared pool using optimistic claims.

pub mod calibration;
pub mod central;
pub mod cli;
pub mod dist;
pub mod engine;
pub mod metrics;
pub mod models;
pub mod taskpool;
pub mod types;

pub use engine::{run, run_with, RunOptions, RunOutput, SimError};
pub use metrics::MetricsReport;
pub use types::Scenario;
