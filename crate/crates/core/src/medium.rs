//! Fixed-range wireless medium.
//!
//! Two nodes hear each other iff their distance is at most `range`. Delivery
//! is lossless; broadcasts reach every in-range node with independent jitter,
//! unicasts are retried while the receiver is out of range and report a link
//! failure to the sender when every attempt misses.

use crate::kernel::{RngStream, SimTime};
use crate::mobility::{Mobility, Point};
use crate::NodeId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub range: f64,
    pub base_latency: SimTime,
    pub jitter_max: SimTime,
    /// Total transmission attempts per unicast frame.
    pub retry_count: u32,
    pub retry_gap: SimTime,
    /// Optional serialization rate in bytes/s; `None` keeps latency size-independent.
    pub bytes_per_sec: Option<f64>,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            range: 250.0,
            base_latency: SimTime::from_micros(2_000),
            jitter_max: SimTime::from_micros(1_000),
            retry_count: 3,
            retry_gap: SimTime::from_micros(30_000),
            bytes_per_sec: None,
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<(), MediumError> {
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(MediumError::Config(format!("range must be positive, got {}", self.range)));
        }
        if self.retry_count < 1 {
            return Err(MediumError::Config("retry_count must be at least 1".into()));
        }
        if let Some(r) = self.bytes_per_sec {
            if !(r > 0.0) {
                return Err(MediumError::Config(format!("bytes_per_sec must be positive, got {r}")));
            }
        }
        Ok(())
    }

    /// One-hop latency for a frame of `size` bytes, jitter included.
    pub fn latency(&self, size: u32, rng: &mut RngStream) -> SimTime {
        let serialization = match self.bytes_per_sec {
            Some(rate) => SimTime::from_secs_f64(f64::from(size) / rate),
            None => SimTime::ZERO,
        };
        self.base_latency + serialization + rng.jitter(self.jitter_max)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MediumError {
    #[error("a node is never in range of itself ({0})")]
    SameNode(NodeId),
    #[error("invalid link model: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dest {
    All,
    Node(NodeId),
}

/// A frame on the air. `payload` is either a data packet or a protocol message.
#[derive(Clone, Debug)]
pub struct Frame<P> {
    pub src: NodeId,
    pub dst: Dest,
    pub payload: P,
    pub size: u32,
}

/// Result of one unicast attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attempt {
    /// Receiver in range; the frame arrives at the given time.
    Delivered(SimTime),
    /// Receiver out of range; try again at the given time.
    RetryAt(SimTime),
    /// Receiver out of range on the final attempt.
    LinkFailure,
}

pub fn within_range(a: Point, b: Point, range: f64) -> bool {
    a.dist_sq(b) <= range * range
}

#[derive(Clone, Debug)]
pub struct Medium {
    link: LinkModel,
}

impl Medium {
    pub fn new(link: LinkModel) -> Self {
        Medium { link }
    }

    pub fn link(&self) -> &LinkModel {
        &self.link
    }

    pub fn in_range(&self, mob: &Mobility, a: NodeId, b: NodeId, t: SimTime) -> Result<bool, MediumError> {
        if a == b {
            return Err(MediumError::SameNode(a));
        }
        Ok(within_range(mob.position(a, t), mob.position(b, t), self.link.range))
    }

    /// Every node in range of `src` at `t`, in id order.
    pub fn neighbors(&self, mob: &Mobility, src: NodeId, t: SimTime) -> Vec<NodeId> {
        let origin = mob.position(src, t);
        (0..mob.len() as u32)
            .map(NodeId)
            .filter(|&n| n != src && within_range(origin, mob.position(n, t), self.link.range))
            .collect()
    }

    /// Receivers of a broadcast sent at `t` and their arrival times.
    pub fn broadcast(
        &self,
        mob: &Mobility,
        src: NodeId,
        size: u32,
        t: SimTime,
        rng: &mut RngStream,
    ) -> Vec<(NodeId, SimTime)> {
        self.neighbors(mob, src, t)
            .into_iter()
            .map(|n| (n, t + self.link.latency(size, rng)))
            .collect()
    }

    /// Attempt number `attempt` (1-based) of a unicast from `src` to `dst` at `t`.
    pub fn unicast_attempt(
        &self,
        mob: &Mobility,
        src: NodeId,
        dst: NodeId,
        size: u32,
        attempt: u32,
        t: SimTime,
        rng: &mut RngStream,
    ) -> Result<Attempt, MediumError> {
        if self.in_range(mob, src, dst, t)? {
            Ok(Attempt::Delivered(t + self.link.latency(size, rng)))
        } else if attempt < self.link.retry_count {
            Ok(Attempt::RetryAt(t + self.link.retry_gap))
        } else {
            Ok(Attempt::LinkFailure)
        }
    }
}
