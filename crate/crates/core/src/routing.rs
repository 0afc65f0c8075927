//! Protocol-neutral routing contract and the shared data forwarding rule.
//!
//! A [`Router`] never touches the medium directly: hooks receive a [`Ctx`]
//! and queue [`Action`]s that the simulator carries out after the hook
//! returns.

use crate::kernel::{RngStream, SimTime};
use crate::metering::PacketKind;
use crate::{FlowId, NodeId};
use std::fmt;

pub const DEFAULT_TTL: u32 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropReason {
    /// Link-layer failure: the next hop was unreachable on every attempt.
    Llf,
    /// No route to the destination.
    Nrte,
    Ttl,
    /// Packet returned to a node it already visited (only when auditing is enabled).
    Loop,
    /// Duplicate control packet suppressed.
    Dup,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Llf => "LLF",
            DropReason::Nrte => "NRTE",
            DropReason::Ttl => "TTL",
            DropReason::Loop => "LOOP",
            DropReason::Dup => "DUP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "LLF" => DropReason::Llf,
            "NRTE" => DropReason::Nrte,
            "TTL" => DropReason::Ttl,
            "LOOP" => DropReason::Loop,
            "DUP" => DropReason::Dup,
            _ => return None,
        })
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataPacket {
    pub flow: FlowId,
    pub seq: u64,
    pub origin: NodeId,
    pub dst: NodeId,
    pub hop_count: u32,
    pub ttl: u32,
    pub sent_at: SimTime,
    pub size: u32,
    /// Nodes that have transmitted this packet; only filled when loop
    /// auditing is enabled.
    pub visited: Vec<NodeId>,
}

impl DataPacket {
    pub fn new(flow: FlowId, seq: u64, origin: NodeId, dst: NodeId, size: u32, sent_at: SimTime) -> Self {
        DataPacket {
            flow,
            seq,
            origin,
            dst,
            hop_count: 0,
            ttl: DEFAULT_TTL,
            sent_at,
            size,
            visited: Vec::new(),
        }
    }
}

/// Requests a router hook makes of the simulator.
#[derive(Clone, Debug)]
pub enum Action<M, T> {
    Broadcast(M),
    Unicast(NodeId, M),
    /// Hand a (previously buffered) data packet back to the forwarding path.
    Forward(DataPacket),
    DropData(DataPacket, DropReason),
    DropControl(DropReason),
    Timer(SimTime, T),
}

/// Per-hook context: current time, the acting node and an action queue.
pub struct Ctx<'a, M, T> {
    pub now: SimTime,
    pub node: NodeId,
    pub rng: &'a mut RngStream,
    actions: &'a mut Vec<Action<M, T>>,
}

impl<'a, M, T> Ctx<'a, M, T> {
    pub fn new(now: SimTime, node: NodeId, rng: &'a mut RngStream, actions: &'a mut Vec<Action<M, T>>) -> Self {
        Ctx { now, node, rng, actions }
    }

    pub fn broadcast(&mut self, msg: M) {
        self.actions.push(Action::Broadcast(msg));
    }

    pub fn unicast(&mut self, to: NodeId, msg: M) {
        self.actions.push(Action::Unicast(to, msg));
    }

    pub fn forward(&mut self, pkt: DataPacket) {
        self.actions.push(Action::Forward(pkt));
    }

    pub fn drop_data(&mut self, pkt: DataPacket, reason: DropReason) {
        self.actions.push(Action::DropData(pkt, reason));
    }

    pub fn drop_control(&mut self, reason: DropReason) {
        self.actions.push(Action::DropControl(reason));
    }

    pub fn timer(&mut self, delay: SimTime, tag: T) {
        self.actions.push(Action::Timer(delay, tag));
    }

    pub fn actions(&self) -> &[Action<M, T>] {
        self.actions
    }
}

pub type RouterCtx<'a, R> = Ctx<'a, <R as Router>::Msg, <R as Router>::Timer>;

/// Behaviour every routing protocol provides, one instance per node.
pub trait Router: Sized {
    type Config: Clone + fmt::Debug;
    type Msg: Clone + fmt::Debug;
    type Timer: Clone + fmt::Debug;

    /// Packet type used in trace records for this protocol's control traffic.
    const KIND: PacketKind;
    /// Whether the protocol wants link up/down notifications from periodic
    /// neighbor sensing.
    const NEIGHBOR_SENSING: bool = false;

    fn new(node: NodeId, n_nodes: usize, cfg: &Self::Config) -> Self;

    fn msg_size(msg: &Self::Msg) -> u32;

    fn start(&mut self, ctx: &mut RouterCtx<'_, Self>);

    /// Next hop toward `dst`, without side effects.
    fn route_lookup(&self, dst: NodeId, now: SimTime) -> Option<NodeId>;

    /// A data packet is about to be sent to `next_hop`. `prev_hop` is the
    /// neighbor it arrived from, `None` at the origin.
    fn on_forward(&mut self, _ctx: &mut RouterCtx<'_, Self>, _pkt: &DataPacket, _prev_hop: Option<NodeId>, _next_hop: NodeId) {}

    /// No route for `pkt`: buffer it or drop it.
    fn on_no_route(&mut self, ctx: &mut RouterCtx<'_, Self>, pkt: DataPacket, prev_hop: Option<NodeId>);

    fn on_control(&mut self, ctx: &mut RouterCtx<'_, Self>, msg: Self::Msg, from: NodeId);

    /// The medium could not reach `neighbor`.
    fn on_link_failure(&mut self, ctx: &mut RouterCtx<'_, Self>, neighbor: NodeId);

    fn on_timer(&mut self, ctx: &mut RouterCtx<'_, Self>, tag: Self::Timer);

    fn on_link_up(&mut self, _ctx: &mut RouterCtx<'_, Self>, _neighbor: NodeId) {}

    fn on_link_down(&mut self, ctx: &mut RouterCtx<'_, Self>, neighbor: NodeId) {
        self.on_link_failure(ctx, neighbor);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Forwarding {
    Deliver,
    NextHop(NodeId),
    NoRoute,
    Drop(DropReason),
}

/// What `node` does with a data packet that just reached it.
pub fn forward_decision<R: Router>(router: &R, node: NodeId, pkt: &DataPacket, now: SimTime, audit_loops: bool) -> Forwarding {
    if audit_loops && pkt.visited.contains(&node) {
        return Forwarding::Drop(DropReason::Loop);
    }
    if pkt.dst == node {
        return Forwarding::Deliver;
    }
    if pkt.ttl <= 1 {
        return Forwarding::Drop(DropReason::Ttl);
    }
    match router.route_lookup(pkt.dst, now) {
        Some(next) => Forwarding::NextHop(next),
        None => Forwarding::NoRoute,
    }
}

/// Applies the per-hop bookkeeping of a transmission by `node`.
pub fn advance_hop(pkt: &mut DataPacket, node: NodeId, audit_loops: bool) {
    pkt.hop_count += 1;
    pkt.ttl -= 1;
    if audit_loops {
        pkt.visited.push(node);
    }
}
