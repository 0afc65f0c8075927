//! Scenario configuration for one simulation run.

use crate::aodv::AodvConfig;
use crate::dsdv::DsdvConfig;
use crate::kernel::SimTime;
use crate::medium::LinkModel;
use crate::mobility::{Arena, WaypointParams};
use crate::tora::ToraConfig;
use crate::traffic::TrafficConfig;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Protocol {
    Dsdv,
    Aodv,
    Tora,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Aodv, Protocol::Dsdv, Protocol::Tora];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Dsdv => "DSDV",
            Protocol::Aodv => "AODV",
            Protocol::Tora => "TORA",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown protocol {0:?} (expected DSDV, AODV or TORA)")]
pub struct UnknownProtocol(pub String);

impl FromStr for Protocol {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "DSDV" => Ok(Protocol::Dsdv),
            "AODV" => Ok(Protocol::Aodv),
            "TORA" => Ok(Protocol::Tora),
            _ => Err(UnknownProtocol(s.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid scenario: {0}")]
pub struct ConfigError(pub String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub protocol: Protocol,
    pub n_nodes: usize,
    pub pause_time: SimTime,
    pub min_speed: f64,
    pub max_speed: f64,
    pub arena: Arena,
    pub duration: SimTime,
    pub seed: u64,
    pub link: LinkModel,
    pub traffic: TrafficConfig,
    pub dsdv: DsdvConfig,
    pub aodv: AodvConfig,
    pub tora: ToraConfig,
    /// Neighbor sensing period for protocols that use link notifications.
    pub sense_interval: SimTime,
    /// Detect link breaks by neighbor sensing as well as by failed unicasts.
    pub hello_detection: bool,
    /// Carry a visited list in every data packet and drop revisits.
    pub audit_loops: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            protocol: Protocol::Aodv,
            n_nodes: 10,
            pause_time: SimTime::ZERO,
            min_speed: 0.1,
            max_speed: 20.0,
            arena: Arena::default(),
            duration: SimTime::from_secs(180),
            seed: 1,
            link: LinkModel::default(),
            traffic: TrafficConfig::default(),
            dsdv: DsdvConfig::default(),
            aodv: AodvConfig::default(),
            tora: ToraConfig::default(),
            sense_interval: SimTime::from_micros(100_000),
            hello_detection: false,
            audit_loops: false,
        }
    }
}

impl ScenarioConfig {
    pub fn new(protocol: Protocol, n_nodes: usize, pause_secs: u64, seed: u64) -> Self {
        ScenarioConfig {
            protocol,
            n_nodes,
            pause_time: SimTime::from_secs(pause_secs),
            seed,
            ..Self::default()
        }
    }

    pub fn waypoint(&self) -> WaypointParams {
        WaypointParams {
            pause_time: self.pause_time,
            min_speed: self.min_speed,
            max_speed: self.max_speed,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if self.n_nodes < 2 {
            return err(format!("need at least 2 nodes, got {}", self.n_nodes));
        }
        if self.duration == SimTime::ZERO {
            return err("duration must be positive".into());
        }
        if self.pause_time > self.duration {
            return err(format!("pause time {} exceeds duration {}", self.pause_time, self.duration));
        }
        if !(self.min_speed > 0.0 && self.min_speed <= self.max_speed && self.max_speed.is_finite()) {
            return err(format!("speed range [{}, {}] is invalid", self.min_speed, self.max_speed));
        }
        if !self.arena.is_valid() {
            return err("arena dimensions must be positive and finite".into());
        }
        if !(self.traffic.rate.is_finite() && self.traffic.rate > 0.0) {
            return err(format!("traffic rate {} must be positive", self.traffic.rate));
        }
        if self.traffic.flow_count(self.n_nodes) > self.n_nodes {
            return err("more flows than nodes".into());
        }
        if self.sense_interval == SimTime::ZERO {
            return err("sense interval must be positive".into());
        }
        self.link.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.dsdv.validate().map_err(ConfigError)?;
        self.aodv.validate().map_err(ConfigError)?;
        self.tora.validate().map_err(ConfigError)?;
        Ok(())
    }

    /// One-line description used in trace headers.
    pub fn summary(&self) -> String {
        format!(
            "protocol={} nodes={} pause={} seed={} duration={} arena={}x{} range={} speed={}..{}",
            self.protocol,
            self.n_nodes,
            self.pause_time,
            self.seed,
            self.duration,
            self.arena.width,
            self.arena.height,
            self.link.range,
            self.min_speed,
            self.max_speed
        )
    }
}
