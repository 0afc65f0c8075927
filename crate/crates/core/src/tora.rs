//! Temporally-Ordered Routing Algorithm.
//!
//! Every node keeps, per active destination, a height
//! `(tau, oid, r, delta, id)` compared lexicographically. Links point from
//! the higher to the lower endpoint, so the heights induce a DAG rooted at
//! the destination, whose height is zero. Data always moves strictly
//! downhill.
//!
//! * Route creation: a node without a height floods a query (QRY); nodes with
//!   a height answer with an update (UPD) and the querier takes the lowest
//!   neighbor height plus one.
//! * Maintenance: a node that loses its last downstream link raises its
//!   height by one of five rules: generate a new reference level, propagate
//!   the highest neighbor level, reflect it, detect a partition, or generate
//!   again after a foreign reflection.
//! * Partition: the node that sees its own reflected level come back clears
//!   the level with CLR, nulling every height that carries it.
//!
//! Control messages are broadcast over the lossless medium, and link state
//! comes from periodic neighbor sensing plus link-layer failure reports.
//! Together these stand in for the reliable neighbor layer TORA relies on.

use crate::kernel::SimTime;
use crate::metering::PacketKind;
use crate::routing::{DataPacket, DropReason, Router, RouterCtx};
use crate::NodeId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ToraHeight {
    pub tau: SimTime,
    pub oid: NodeId,
    pub r: u8,
    pub delta: i64,
    pub id: NodeId,
}

impl ToraHeight {
    pub fn zero(dst: NodeId) -> Self {
        ToraHeight {
            tau: SimTime::ZERO,
            oid: NodeId(0),
            r: 0,
            delta: 0,
            id: dst,
        }
    }

    pub fn reference(&self) -> RefLevel {
        RefLevel {
            tau: self.tau,
            oid: self.oid,
            r: self.r,
        }
    }

    fn at_level(level: RefLevel, delta: i64, id: NodeId) -> Self {
        ToraHeight {
            tau: level.tau,
            oid: level.oid,
            r: level.r,
            delta,
            id,
        }
    }
}

impl fmt::Display for ToraHeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {}, {})", self.tau, self.oid, self.r, self.delta, self.id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RefLevel {
    pub tau: SimTime,
    pub oid: NodeId,
    pub r: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkDirection {
    Upstream,
    Downstream,
    Undirected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ToraLinkState {
    pub neighbor: NodeId,
    pub neighbor_height: Option<ToraHeight>,
    pub direction: LinkDirection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToraConfig {
    /// How long an origin buffers data while its query is outstanding; also
    /// the age after which a pending query may be re-flooded.
    pub qry_wait: SimTime,
    pub buffer_capacity: usize,
}

impl Default for ToraConfig {
    fn default() -> Self {
        ToraConfig {
            qry_wait: SimTime::from_secs(1),
            buffer_capacity: 64,
        }
    }
}

impl ToraConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.qry_wait == SimTime::ZERO || self.buffer_capacity == 0 {
            return Err("TORA qry_wait and buffer_capacity must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToraMsg {
    Qry { dst: NodeId },
    Upd { dst: NodeId, height: Option<ToraHeight> },
    Clr { dst: NodeId, tau: SimTime, oid: NodeId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToraTimer {
    QryWait { dst: NodeId, generation: u64 },
}

/// Which maintenance rule fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reaction {
    Generate,
    Propagate,
    Reflect,
    DetectPartition,
    GenerateAfterReflection,
    /// No neighbor carries a height: the node simply forgets its own.
    Isolated,
}

#[derive(Debug, Default)]
struct DestState {
    height: Option<ToraHeight>,
    nbr: BTreeMap<NodeId, Option<ToraHeight>>,
    route_required: bool,
    qry_sent_at: Option<SimTime>,
    upd_sent_at: Option<SimTime>,
    buffer: VecDeque<DataPacket>,
    wait_generation: Option<u64>,
}

impl DestState {
    fn has_downstream(&self) -> bool {
        let Some(own) = self.height else { return false };
        self.nbr.values().any(|h| matches!(h, Some(h) if *h < own))
    }

    fn lowest_downstream(&self) -> Option<NodeId> {
        let own = self.height?;
        self.nbr
            .iter()
            .filter_map(|(&n, h)| h.filter(|h| *h < own).map(|h| (h, n)))
            .min()
            .map(|(_, n)| n)
    }

    fn min_neighbor_height(&self) -> Option<ToraHeight> {
        self.nbr.values().flatten().min().copied()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ToraStats {
    pub height_changes: u64,
    pub partitions_detected: u64,
    pub qry_sent: u64,
    pub upd_sent: u64,
    pub clr_sent: u64,
}

#[derive(Debug)]
pub struct ToraNode {
    id: NodeId,
    cfg: ToraConfig,
    /// Current neighbors and the time each link came up.
    links: BTreeMap<NodeId, SimTime>,
    dests: BTreeMap<NodeId, DestState>,
    next_generation: u64,
    stats: ToraStats,
    reactions: Vec<Reaction>,
}

impl ToraNode {
    pub fn height(&self, dst: NodeId) -> Option<ToraHeight> {
        if dst == self.id {
            return Some(ToraHeight::zero(dst));
        }
        self.dests.get(&dst).and_then(|s| s.height)
    }

    pub fn neighbors(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.links.keys().copied()
    }

    /// This node's view of its links for `dst`.
    pub fn link_states(&self, dst: NodeId) -> Vec<ToraLinkState> {
        let own = self.height(dst);
        let known = self.dests.get(&dst);
        self.links
            .keys()
            .map(|&n| {
                let nh = known.and_then(|s| s.nbr.get(&n).copied().flatten());
                let direction = match (own, nh) {
                    (Some(a), Some(b)) if a > b => LinkDirection::Downstream,
                    (Some(a), Some(b)) if a < b => LinkDirection::Upstream,
                    _ => LinkDirection::Undirected,
                };
                ToraLinkState {
                    neighbor: n,
                    neighbor_height: nh,
                    direction,
                }
            })
            .collect()
    }

    pub fn active_destinations(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.dests.keys().copied()
    }

    pub fn stats(&self) -> ToraStats {
        self.stats
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn route_required(&self, dst: NodeId) -> bool {
        self.dests.get(&dst).is_some_and(|s| s.route_required)
    }

    fn state(&mut self, dst: NodeId) -> &mut DestState {
        let links = &self.links;
        let id = self.id;
        self.dests.entry(dst).or_insert_with(|| DestState {
            height: (dst == id).then(|| ToraHeight::zero(dst)),
            nbr: links.keys().map(|&n| (n, None)).collect(),
            ..DestState::default()
        })
    }

    fn set_height(&mut self, dst: NodeId, h: Option<ToraHeight>) {
        let st = self.dests.get_mut(&dst).expect("state exists");
        if st.height != h {
            st.height = h;
            self.stats.height_changes += 1;
        }
    }

    fn send_upd(&mut self, ctx: &mut RouterCtx<'_, Self>, dst: NodeId) {
        let st = self.dests.get_mut(&dst).expect("state exists");
        st.upd_sent_at = Some(ctx.now);
        let height = st.height;
        self.stats.upd_sent += 1;
        ctx.broadcast(ToraMsg::Upd { dst, height });
    }

    fn send_qry(&mut self, ctx: &mut RouterCtx<'_, Self>, dst: NodeId) {
        let st = self.state(dst);
        st.route_required = true;
        st.qry_sent_at = Some(ctx.now);
        self.stats.qry_sent += 1;
        ctx.broadcast(ToraMsg::Qry { dst });
    }

    fn query_stale(&self, dst: NodeId, now: SimTime) -> bool {
        let Some(st) = self.dests.get(&dst) else { return true };
        !st.route_required || st.qry_sent_at.is_none_or(|t| now.saturating_sub(t) >= self.cfg.qry_wait)
    }

    /// Releases buffered data once a downstream link exists.
    fn flush(&mut self, ctx: &mut RouterCtx<'_, Self>, dst: NodeId) {
        let Some(st) = self.dests.get_mut(&dst) else { return };
        if !st.has_downstream() {
            return;
        }
        st.wait_generation = None;
        for pkt in st.buffer.drain(..) {
            ctx.forward(pkt);
        }
    }

    fn drop_buffer(&mut self, ctx: &mut RouterCtx<'_, Self>, dst: NodeId) {
        if let Some(st) = self.dests.get_mut(&dst) {
            st.wait_generation = None;
            for pkt in st.buffer.drain(..) {
                ctx.drop_data(pkt, DropReason::Nrte);
            }
        }
    }

    /// Starts route creation for `dst` (QRY flood) if none is in progress.
    pub fn create_route(&mut self, ctx: &mut RouterCtx<'_, Self>, dst: NodeId) {
        let st = self.state(dst);
        if st.height.is_some() {
            return;
        }
        if let Some(min) = st.min_neighbor_height() {
            self.adopt_from_neighbors(ctx, dst, min);
            return;
        }
        if self.query_stale(dst, ctx.now) {
            self.send_qry(ctx, dst);
        }
    }

    fn adopt_from_neighbors(&mut self, ctx: &mut RouterCtx<'_, Self>, dst: NodeId, min: ToraHeight) {
        let h = ToraHeight {
            delta: min.delta + 1,
            id: self.id,
            ..min
        };
        self.set_height(dst, Some(h));
        self.state(dst).route_required = false;
        self.send_upd(ctx, dst);
        self.flush(ctx, dst);
    }

    fn handle_qry(&mut self, ctx: &mut RouterCtx<'_, Self>, dst: NodeId, from: NodeId) {
        let link_up = self.links.get(&from).copied().unwrap_or(ctx.now);
        let st = self.state(dst);
        if st.height.is_some() {
            if st.upd_sent_at.is_some_and(|t| t >= link_up) {
                return;
            }
            self.send_upd(ctx, dst);
            return;
        }
        if let Some(min) = st.min_neighbor_height() {
            self.adopt_from_neighbors(ctx, dst, min);
            return;
        }
        if self.query_stale(dst, ctx.now) {
            self.send_qry(ctx, dst);
        }
    }

    fn handle_upd(&mut self, ctx: &mut RouterCtx<'_, Self>, dst: NodeId, height: Option<ToraHeight>, from: NodeId) {
        let is_self = dst == self.id;
        let st = self.state(dst);
        let had_downstream = st.has_downstream();
        st.nbr.insert(from, height);
        if is_self {
            return;
        }
        match st.height {
            None => {
                if st.route_required {
                    if let Some(min) = st.min_neighbor_height() {
                        self.adopt_from_neighbors(ctx, dst, min);
                    }
                }
            }
            Some(_) => {
                if st.has_downstream() {
                    self.flush(ctx, dst);
                } else if had_downstream {
                    self.maintain(ctx, dst, false);
                }
            }
        }
    }

    fn handle_clr(&mut self, ctx: &mut RouterCtx<'_, Self>, dst: NodeId, tau: SimTime, oid: NodeId, from: NodeId) {
        if dst == self.id {
            self.state(dst).nbr.insert(from, None);
            return;
        }
        let level = RefLevel { tau, oid, r: 1 };
        let st = self.state(dst);
        let had_downstream = st.has_downstream();
        st.nbr.insert(from, None);
        for h in st.nbr.values_mut() {
            if h.is_some_and(|h| h.reference() == level) {
                *h = None;
            }
        }
        match st.height {
            Some(own) if own.reference() == level => {
                self.clear_route(ctx, dst, Some((tau, oid)));
            }
            Some(_) if had_downstream && !st.has_downstream() => {
                self.maintain(ctx, dst, true);
            }
            _ => {}
        }
    }

    /// Nulls this node's height for `dst` and, when `level` is given,
    /// propagates the clear.
    pub fn clear_route(&mut self, ctx: &mut RouterCtx<'_, Self>, dst: NodeId, level: Option<(SimTime, NodeId)>) {
        self.set_height(dst, None);
        let st = self.state(dst);
        st.route_required = false;
        st.qry_sent_at = None;
        self.drop_buffer(ctx, dst);
        if let Some((tau, oid)) = level {
            self.stats.clr_sent += 1;
            ctx.broadcast(ToraMsg::Clr { dst, tau, oid });
        }
    }

    /// Reaction of a node that has lost its last downstream link.
    fn maintain(&mut self, ctx: &mut RouterCtx<'_, Self>, dst: NodeId, link_failure: bool) {
        let id = self.id;
        let now = ctx.now;
        let st = self.state(dst);
        let Some(own) = st.height else { return };
        let known: Vec<ToraHeight> = st.nbr.values().flatten().copied().collect();
        let fresh = ToraHeight {
            tau: now,
            oid: id,
            r: 0,
            delta: 0,
            id,
        };
        let (reaction, next) = if known.is_empty() {
            (Reaction::Isolated, None)
        } else if link_failure {
            (Reaction::Generate, Some(fresh))
        } else {
            let top = known.iter().map(ToraHeight::reference).max().expect("non-empty");
            let uniform = known.iter().all(|h| h.reference() == top);
            if !uniform {
                let delta = known
                    .iter()
                    .filter(|h| h.reference() == top)
                    .map(|h| h.delta)
                    .min()
                    .expect("top level present");
                (Reaction::Propagate, Some(ToraHeight::at_level(top, delta - 1, id)))
            } else if top.r == 0 {
                let reflected = RefLevel { r: 1, ..top };
                (Reaction::Reflect, Some(ToraHeight::at_level(reflected, 0, id)))
            } else if top.oid == id {
                (Reaction::DetectPartition, None)
            } else {
                (Reaction::GenerateAfterReflection, Some(fresh))
            }
        };
        self.reactions.push(reaction);
        match reaction {
            Reaction::DetectPartition => {
                self.stats.partitions_detected += 1;
                self.clear_route(ctx, dst, Some((own.tau, own.oid)));
            }
            Reaction::Isolated => {
                self.clear_route(ctx, dst, None);
            }
            _ => {
                self.set_height(dst, next);
                self.send_upd(ctx, dst);
                self.flush(ctx, dst);
            }
        }
    }

    fn link_up(&mut self, ctx: &mut RouterCtx<'_, Self>, neighbor: NodeId) {
        if self.links.contains_key(&neighbor) {
            return;
        }
        self.links.insert(neighbor, ctx.now);
        let dsts: Vec<NodeId> = self.dests.keys().copied().collect();
        for dst in dsts {
            let st = self.dests.get_mut(&dst).expect("listed");
            st.nbr.insert(neighbor, None);
            if st.height.is_some() {
                self.send_upd(ctx, dst);
            }
        }
    }

    fn link_down(&mut self, ctx: &mut RouterCtx<'_, Self>, neighbor: NodeId) {
        if self.links.remove(&neighbor).is_none() {
            return;
        }
        let dsts: Vec<NodeId> = self.dests.keys().copied().collect();
        for dst in dsts {
            let st = self.dests.get_mut(&dst).expect("listed");
            let had_downstream = st.has_downstream();
            st.nbr.remove(&neighbor);
            if dst != self.id && st.height.is_some() && had_downstream && !st.has_downstream() {
                self.maintain(ctx, dst, true);
            }
        }
    }
}

impl Router for ToraNode {
    type Config = ToraConfig;
    type Msg = ToraMsg;
    type Timer = ToraTimer;
    const KIND: PacketKind = PacketKind::Tora;
    const NEIGHBOR_SENSING: bool = true;

    fn new(node: NodeId, _n_nodes: usize, cfg: &ToraConfig) -> Self {
        ToraNode {
            id: node,
            cfg: *cfg,
            links: BTreeMap::new(),
            dests: BTreeMap::new(),
            next_generation: 0,
            stats: ToraStats::default(),
            reactions: Vec::new(),
        }
    }

    fn msg_size(msg: &ToraMsg) -> u32 {
        match msg {
            ToraMsg::Qry { .. } => 8,
            ToraMsg::Upd { .. } => 28,
            ToraMsg::Clr { .. } => 16,
        }
    }

    fn start(&mut self, _ctx: &mut RouterCtx<'_, Self>) {}

    fn route_lookup(&self, dst: NodeId, _now: SimTime) -> Option<NodeId> {
        self.dests.get(&dst).and_then(DestState::lowest_downstream)
    }

    fn on_no_route(&mut self, ctx: &mut RouterCtx<'_, Self>, pkt: DataPacket, _prev_hop: Option<NodeId>) {
        if pkt.origin != self.id {
            ctx.drop_data(pkt, DropReason::Nrte);
            return;
        }
        let dst = pkt.dst;
        let cap = self.cfg.buffer_capacity;
        let st = self.state(dst);
        st.buffer.push_back(pkt);
        if st.buffer.len() > cap {
            let old = st.buffer.pop_front().expect("non-empty");
            ctx.drop_data(old, DropReason::Nrte);
        }
        if st.wait_generation.is_none() {
            let generation = self.next_generation;
            self.next_generation += 1;
            self.state(dst).wait_generation = Some(generation);
            ctx.timer(self.cfg.qry_wait, ToraTimer::QryWait { dst, generation });
        }
        self.create_route(ctx, dst);
    }

    fn on_control(&mut self, ctx: &mut RouterCtx<'_, Self>, msg: ToraMsg, from: NodeId) {
        // Hearing a neighbor proves the link; sensing may not have caught up.
        self.link_up(ctx, from);
        match msg {
            ToraMsg::Qry { dst } => self.handle_qry(ctx, dst, from),
            ToraMsg::Upd { dst, height } => self.handle_upd(ctx, dst, height, from),
            ToraMsg::Clr { dst, tau, oid } => self.handle_clr(ctx, dst, tau, oid, from),
        }
    }

    fn on_link_failure(&mut self, ctx: &mut RouterCtx<'_, Self>, neighbor: NodeId) {
        self.link_down(ctx, neighbor);
    }

    fn on_link_up(&mut self, ctx: &mut RouterCtx<'_, Self>, neighbor: NodeId) {
        self.link_up(ctx, neighbor);
    }

    fn on_link_down(&mut self, ctx: &mut RouterCtx<'_, Self>, neighbor: NodeId) {
        self.link_down(ctx, neighbor);
    }

    fn on_timer(&mut self, ctx: &mut RouterCtx<'_, Self>, tag: ToraTimer) {
        let ToraTimer::QryWait { dst, generation } = tag;
        let Some(st) = self.dests.get_mut(&dst) else { return };
        if st.wait_generation != Some(generation) {
            return;
        }
        if st.has_downstream() {
            self.flush(ctx, dst);
            return;
        }
        st.route_required = false;
        self.drop_buffer(ctx, dst);
    }
}
