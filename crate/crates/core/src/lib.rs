//! Deterministic discrete-event simulator for mobile ad hoc networks.
//!
//! Nodes move under Random Waypoint over a fixed-range wireless medium and
//! route constant-bit-rate traffic with DSDV, AODV or TORA. Every run emits a
//! line-oriented trace; [`metering`] turns a trace into route convergence
//! times and [`runner`] sweeps the node-count × pause-time matrix.

use serde::{Deserialize, Serialize};
use std::fmt;

pub mod aodv;
pub mod config;
pub mod dsdv;
pub mod kernel;
pub mod medium;
pub mod metering;
pub mod mobility;
pub mod routing;
pub mod runner;
pub mod sim;
pub mod tora;
pub mod traffic;

pub use config::{Protocol, ScenarioConfig};
pub use kernel::SimTime;
pub use runner::{run_matrix, run_one, RunResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}
