//! Constant-bit-rate flows between random node pairs.

use crate::kernel::{RngStream, SimTime};
use crate::{FlowId, NodeId};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficConfig {
    /// Number of flows; `None` means `min(10, n/2)`.
    pub flows: Option<usize>,
    /// Packets per second.
    pub rate: f64,
    pub packet_size: u32,
    /// Flow start times are drawn uniformly from `[0, start_window]`.
    pub start_window: SimTime,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            flows: None,
            rate: 10.0,
            packet_size: 512,
            start_window: SimTime::from_secs(10),
        }
    }
}

impl TrafficConfig {
    pub fn flow_count(&self, n_nodes: usize) -> usize {
        self.flows.unwrap_or((n_nodes / 2).min(10))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub flow: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    pub rate: f64,
    pub packet_size: u32,
    pub start: SimTime,
    pub stop: SimTime,
}

impl FlowSpec {
    /// Number of packets injected over `[start, stop)`.
    pub fn packet_count(&self) -> u64 {
        let window = self.stop.saturating_sub(self.start).as_micros();
        // Work in integer microseconds times the rate to avoid rounding
        // a whole-number product down by one ulp.
        let exact = window as f64 * self.rate / 1e6;
        let rounded = exact.round();
        if (exact - rounded).abs() < 1e-9 {
            rounded as u64
        } else {
            exact.floor() as u64
        }
    }

    /// Injection time of packet `seq`.
    pub fn emit_time(&self, seq: u64) -> SimTime {
        self.start + SimTime::from_secs_f64(seq as f64 / self.rate)
    }

    /// All injection instants, seq 0 first.
    pub fn emit(&self) -> impl Iterator<Item = (u64, SimTime)> + '_ {
        (0..self.packet_count()).map(move |seq| (seq, self.emit_time(seq)))
    }
}

impl fmt::Display for FlowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "flow {} src {} dst {} rate {} size {} start {} stop {}",
            self.flow, self.src, self.dst, self.rate, self.packet_size, self.start, self.stop
        )
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("traffic needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("{flows} flows need distinct sources but only {nodes} nodes exist")]
    TooManyFlows { flows: usize, nodes: usize },
    #[error("rate must be positive and finite, got {0}")]
    Rate(f64),
}

/// Draws the flow set for a run ending at `stop`.
pub fn generate_flows(n_nodes: usize, cfg: &TrafficConfig, stop: SimTime, rng: &mut RngStream) -> Result<Vec<FlowSpec>, TrafficError> {
    if n_nodes < 2 {
        return Err(TrafficError::TooFewNodes(n_nodes));
    }
    if !(cfg.rate.is_finite() && cfg.rate > 0.0) {
        return Err(TrafficError::Rate(cfg.rate));
    }
    let k = cfg.flow_count(n_nodes);
    if k > n_nodes {
        return Err(TrafficError::TooManyFlows { flows: k, nodes: n_nodes });
    }
    // Partial Fisher-Yates for distinct sources.
    let mut pool: Vec<u32> = (0..n_nodes as u32).collect();
    let mut flows = Vec::with_capacity(k);
    for i in 0..k {
        let j = i + rng.below((n_nodes - i) as u64) as usize;
        pool.swap(i, j);
        let src = pool[i];
        let mut dst = rng.below(n_nodes as u64 - 1) as u32;
        if dst >= src {
            dst += 1;
        }
        let start = rng.jitter(cfg.start_window);
        flows.push(FlowSpec {
            flow: FlowId(i as u32),
            src: NodeId(src),
            dst: NodeId(dst),
            rate: cfg.rate,
            packet_size: cfg.packet_size,
            start: start.min(stop),
            stop,
        });
    }
    Ok(flows)
}
