//! Scenario configuration, the simulation loop and its recorded outputs.

mod config;
mod demand;
mod engine;
mod metrics;

use thiserror::Error;

use crate::network::{NetworkError, NodeId};

pub use config::{CavSection, DemandSection, Mode, NetworkSection, OdDemand, ScenarioConfig, SimSection};
pub use demand::{DemandGenerator, Spawn};
pub use engine::{run_simulation, run_simulation_on};
pub use metrics::{
    export_metrics, total_travel_time, AssignmentRecord, BinSnapshot, Event, MetricsLog, Summary, TravelTime, Trip,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("no path from {origin} to {destination}")]
    Unreachable { origin: NodeId, destination: NodeId },
    #[error("gridlock at t={time:.1} s: no vehicle moved for the watchdog period\n{dump}")]
    Gridlock { time: f64, dump: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
