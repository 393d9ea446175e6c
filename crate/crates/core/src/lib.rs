//! Discrete-round simulator for clustered wireless sensor networks.
//!
//! Two protocols share one deployment, radio model and data phase:
//! [`lmeec`] (layered, multi-hop, weight-elected heads) and the [`leach`]
//! baseline (rotating random heads, single hop to the base station).
//! [`engine::run`] executes one run; [`experiment`] sweeps node counts and
//! seeds and writes CSV/JSON reports.

pub mod config;
pub mod energy;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod leach;
pub mod lmeec;
pub mod metrics;
pub mod topology;

pub use config::RunConfig;
pub use energy::{EnergyState, RadioParams};
pub use engine::{run, Protocol, RunOutput, SimConfig, SimParams, TraceLevel};
pub use error::{Error, Result};
pub use leach::LeachParams;
pub use lmeec::LmeecParams;
pub use metrics::MetricsRecord;
pub use topology::{NetworkTopology, NodeId, Position, TopologyParams};
