//! Ad hoc On-demand Distance Vector routing.
//!
//! Routes are discovered by flooding a route request (RREQ) that lays down
//! reverse routes toward the requester; the destination, or a node with a
//! fresh enough route, answers with a route reply (RREP) unicast back along
//! them. Breakage detected by the link layer invalidates routes and is
//! reported upstream with route errors (RERR). Idle routes expire.
//!
//! A node holds a new RREQ for `rreq_collect_window` before acting on it and
//! keeps the fewest-hop copy heard in that window, so flood jitter cannot make
//! a longer path win the race. Each request is still relayed at most once.

use crate::kernel::SimTime;
use crate::metering::PacketKind;
use crate::routing::{DataPacket, DropReason, Router, RouterCtx};
use crate::NodeId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AodvConfig {
    pub route_lifetime: SimTime,
    pub rreq_retries: u32,
    pub rreq_wait: SimTime,
    pub buffer_capacity: usize,
    pub rreq_collect_window: SimTime,
    pub recycle_interval: SimTime,
}

impl Default for AodvConfig {
    fn default() -> Self {
        AodvConfig {
            route_lifetime: SimTime::from_secs(10),
            rreq_retries: 2,
            rreq_wait: SimTime::from_secs(1),
            buffer_capacity: 64,
            rreq_collect_window: SimTime::from_micros(10_000),
            recycle_interval: SimTime::from_secs(1),
        }
    }
}

impl AodvConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.route_lifetime == SimTime::ZERO || self.rreq_wait == SimTime::ZERO {
            return Err("AODV route_lifetime and rreq_wait must be positive".into());
        }
        if self.buffer_capacity == 0 {
            return Err("AODV buffer_capacity must be positive".into());
        }
        if self.recycle_interval == SimTime::ZERO {
            return Err("AODV recycle_interval must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AodvRouteEntry {
    pub dst: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub dst_seqno: u64,
    pub valid: bool,
    pub expires_at: SimTime,
    pub precursors: BTreeSet<NodeId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rreq {
    pub rreq_id: u32,
    pub origin: NodeId,
    pub origin_seqno: u64,
    pub dst: NodeId,
    pub dst_seqno_known: Option<u64>,
    pub hop_count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rrep {
    pub origin: NodeId,
    pub dst: NodeId,
    pub dst_seqno: u64,
    pub hop_count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rerr {
    pub unreachable: Vec<(NodeId, u64)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AodvMsg {
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AodvTimer {
    /// Collection window of a received RREQ has closed.
    RreqDecide { origin: NodeId, rreq_id: u32 },
    /// Discovery attempt `generation` for `dst` timed out.
    RreqWait { dst: NodeId, generation: u64 },
    Recycle,
}

#[derive(Debug)]
struct RreqState {
    decided: bool,
    best_hops: u32,
    best_from: NodeId,
    rreq: Rreq,
}

#[derive(Debug)]
struct Discovery {
    buffer: VecDeque<DataPacket>,
    retries_left: u32,
    generation: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AodvStats {
    pub rreq_originated: u64,
    pub rreq_relayed: u64,
    pub rrep_sent: u64,
    pub rrep_dropped: u64,
    pub rerr_sent: u64,
    pub buffer_overflow: u64,
}

#[derive(Debug)]
pub struct AodvNode {
    id: NodeId,
    cfg: AodvConfig,
    seqno: u64,
    rreq_id: u32,
    table: BTreeMap<NodeId, AodvRouteEntry>,
    seen: HashMap<(NodeId, u32), RreqState>,
    pending: BTreeMap<NodeId, Discovery>,
    next_generation: u64,
    stats: AodvStats,
}

impl AodvNode {
    pub fn seqno(&self) -> u64 {
        self.seqno
    }

    pub fn route(&self, dst: NodeId) -> Option<&AodvRouteEntry> {
        self.table.get(&dst)
    }

    pub fn table(&self) -> &BTreeMap<NodeId, AodvRouteEntry> {
        &self.table
    }

    pub fn stats(&self) -> AodvStats {
        self.stats
    }

    pub fn is_discovering(&self, dst: NodeId) -> bool {
        self.pending.contains_key(&dst)
    }

    pub fn buffered(&self, dst: NodeId) -> usize {
        self.pending.get(&dst).map_or(0, |d| d.buffer.len())
    }

    fn usable(&self, dst: NodeId, now: SimTime) -> Option<&AodvRouteEntry> {
        self.table.get(&dst).filter(|e| e.valid && e.expires_at >= now)
    }

    fn originate_rreq(&mut self, ctx: &mut RouterCtx<'_, Self>, dst: NodeId, generation: u64) {
        self.seqno += 1;
        self.rreq_id += 1;
        let rreq = Rreq {
            rreq_id: self.rreq_id,
            origin: self.id,
            origin_seqno: self.seqno,
            dst,
            dst_seqno_known: self.table.get(&dst).map(|e| e.dst_seqno),
            hop_count: 0,
        };
        self.seen.insert(
            (self.id, self.rreq_id),
            RreqState {
                decided: true,
                best_hops: 0,
                best_from: self.id,
                rreq,
            },
        );
        self.stats.rreq_originated += 1;
        ctx.broadcast(AodvMsg::Rreq(rreq));
        ctx.timer(self.cfg.rreq_wait, AodvTimer::RreqWait { dst, generation });
    }

    fn install_reverse(&mut self, now: SimTime, r: &Rreq, via: NodeId, hops: u32) {
        let lifetime = now + self.cfg.route_lifetime;
        match self.table.get_mut(&r.origin) {
            Some(e) if r.origin_seqno < e.dst_seqno => {}
            Some(e) => {
                if r.origin_seqno > e.dst_seqno || !e.valid || hops < e.hop_count {
                    e.next_hop = via;
                    e.hop_count = hops;
                }
                e.dst_seqno = r.origin_seqno;
                e.valid = true;
                e.expires_at = e.expires_at.max(lifetime);
            }
            None => {
                self.table.insert(
                    r.origin,
                    AodvRouteEntry {
                        dst: r.origin,
                        next_hop: via,
                        hop_count: hops,
                        dst_seqno: r.origin_seqno,
                        valid: true,
                        expires_at: lifetime,
                        precursors: BTreeSet::new(),
                    },
                );
            }
        }
    }

    fn handle_rreq(&mut self, ctx: &mut RouterCtx<'_, Self>, r: Rreq, from: NodeId) {
        let hops = r.hop_count + 1;
        let key = (r.origin, r.rreq_id);
        if let Some(st) = self.seen.get_mut(&key) {
            if !st.decided && hops < st.best_hops {
                st.best_hops = hops;
                st.best_from = from;
                st.rreq = r;
                self.install_reverse(ctx.now, &r, from, hops);
            } else {
                ctx.drop_control(DropReason::Dup);
            }
            return;
        }
        self.seen.insert(
            key,
            RreqState {
                decided: false,
                best_hops: hops,
                best_from: from,
                rreq: r,
            },
        );
        self.install_reverse(ctx.now, &r, from, hops);
        ctx.timer(
            self.cfg.rreq_collect_window,
            AodvTimer::RreqDecide {
                origin: r.origin,
                rreq_id: r.rreq_id,
            },
        );
    }

    fn decide_rreq(&mut self, ctx: &mut RouterCtx<'_, Self>, origin: NodeId, rreq_id: u32) {
        let Some(st) = self.seen.get_mut(&(origin, rreq_id)) else { return };
        if st.decided {
            return;
        }
        st.decided = true;
        let (r, hops, from) = (st.rreq, st.best_hops, st.best_from);
        let back = self.usable(origin, ctx.now).map_or(from, |e| e.next_hop);
        if r.dst == self.id {
            self.seqno = self.seqno.max(r.dst_seqno_known.unwrap_or(0)) + 1;
            self.stats.rrep_sent += 1;
            ctx.unicast(
                back,
                AodvMsg::Rrep(Rrep {
                    origin,
                    dst: self.id,
                    dst_seqno: self.seqno,
                    hop_count: 0,
                }),
            );
            return;
        }
        let fresh = self.usable(r.dst, ctx.now).filter(|e| {
            r.dst_seqno_known.is_none_or(|known| e.dst_seqno >= known) && e.next_hop != back && e.next_hop != origin
        });
        if let Some(e) = fresh {
            let reply = Rrep {
                origin,
                dst: r.dst,
                dst_seqno: e.dst_seqno,
                hop_count: e.hop_count,
            };
            self.table.get_mut(&r.dst).expect("fresh route").precursors.insert(back);
            self.stats.rrep_sent += 1;
            ctx.unicast(back, AodvMsg::Rrep(reply));
            return;
        }
        self.stats.rreq_relayed += 1;
        ctx.broadcast(AodvMsg::Rreq(Rreq { hop_count: hops, ..r }));
    }

    fn handle_rrep(&mut self, ctx: &mut RouterCtx<'_, Self>, rrep: Rrep, from: NodeId) {
        let now = ctx.now;
        let hops = rrep.hop_count + 1;
        let adopt = match self.table.get(&rrep.dst) {
            None => true,
            Some(e) => {
                rrep.dst_seqno > e.dst_seqno
                    || (rrep.dst_seqno == e.dst_seqno && (!e.valid || hops < e.hop_count))
            }
        };
        if adopt {
            let precursors = self.table.remove(&rrep.dst).map(|e| e.precursors).unwrap_or_default();
            self.table.insert(
                rrep.dst,
                AodvRouteEntry {
                    dst: rrep.dst,
                    next_hop: from,
                    hop_count: hops,
                    dst_seqno: rrep.dst_seqno,
                    valid: true,
                    expires_at: now + self.cfg.route_lifetime,
                    precursors,
                },
            );
        }
        if rrep.origin == self.id {
            if self.usable(rrep.dst, now).is_some() {
                if let Some(d) = self.pending.remove(&rrep.dst) {
                    for pkt in d.buffer {
                        ctx.forward(pkt);
                    }
                }
            }
            return;
        }
        if !adopt {
            return;
        }
        let Some(back) = self.usable(rrep.origin, now).map(|e| e.next_hop) else {
            self.stats.rrep_dropped += 1;
            return;
        };
        self.table.get_mut(&rrep.dst).expect("adopted").precursors.insert(back);
        if let Some(rev) = self.table.get_mut(&rrep.origin) {
            rev.precursors.insert(from);
            rev.expires_at = rev.expires_at.max(now + self.cfg.route_lifetime);
        }
        ctx.unicast(back, AodvMsg::Rrep(Rrep { hop_count: hops, ..rrep }));
    }

    fn send_rerr(&mut self, ctx: &mut RouterCtx<'_, Self>, lost: Vec<(NodeId, u64)>, to: BTreeSet<NodeId>) {
        if lost.is_empty() {
            return;
        }
        for p in to {
            self.stats.rerr_sent += 1;
            ctx.unicast(
                p,
                AodvMsg::Rerr(Rerr {
                    unreachable: lost.clone(),
                }),
            );
        }
    }

    fn handle_rerr(&mut self, ctx: &mut RouterCtx<'_, Self>, rerr: Rerr, from: NodeId) {
        let mut lost = Vec::new();
        let mut upstream = BTreeSet::new();
        for (dst, seqno) in rerr.unreachable {
            if let Some(e) = self.table.get_mut(&dst) {
                if e.valid && e.next_hop == from {
                    e.valid = false;
                    e.dst_seqno = e.dst_seqno.max(seqno);
                    lost.push((dst, e.dst_seqno));
                    upstream.extend(e.precursors.iter().copied());
                }
            }
        }
        upstream.remove(&from);
        self.send_rerr(ctx, lost, upstream);
    }

    fn recycle_routes(&mut self, now: SimTime) -> usize {
        let mut expired = 0;
        for e in self.table.values_mut() {
            if e.valid && e.expires_at < now {
                e.valid = false;
                expired += 1;
            }
        }
        expired
    }

    fn enqueue(&mut self, pkt: DataPacket) -> Option<DataPacket> {
        let cap = self.cfg.buffer_capacity;
        let d = self.pending.get_mut(&pkt.dst).expect("discovery in progress");
        d.buffer.push_back(pkt);
        if d.buffer.len() > cap {
            self.stats.buffer_overflow += 1;
            return d.buffer.pop_front();
        }
        None
    }
}

impl Router for AodvNode {
    type Config = AodvConfig;
    type Msg = AodvMsg;
    type Timer = AodvTimer;
    const KIND: PacketKind = PacketKind::Aodv;

    fn new(node: NodeId, _n_nodes: usize, cfg: &AodvConfig) -> Self {
        AodvNode {
            id: node,
            cfg: *cfg,
            seqno: 0,
            rreq_id: 0,
            table: BTreeMap::new(),
            seen: HashMap::new(),
            pending: BTreeMap::new(),
            next_generation: 0,
            stats: AodvStats::default(),
        }
    }

    fn msg_size(msg: &AodvMsg) -> u32 {
        match msg {
            AodvMsg::Rreq(_) => 24,
            AodvMsg::Rrep(_) => 20,
            AodvMsg::Rerr(e) => 4 + 8 * e.unreachable.len() as u32,
        }
    }

    fn start(&mut self, ctx: &mut RouterCtx<'_, Self>) {
        let phase = ctx.rng.jitter(self.cfg.recycle_interval);
        ctx.timer(phase, AodvTimer::Recycle);
    }

    fn route_lookup(&self, dst: NodeId, now: SimTime) -> Option<NodeId> {
        self.usable(dst, now).map(|e| e.next_hop)
    }

    fn on_forward(&mut self, ctx: &mut RouterCtx<'_, Self>, pkt: &DataPacket, prev_hop: Option<NodeId>, _next_hop: NodeId) {
        let expires = ctx.now + self.cfg.route_lifetime;
        if let Some(e) = self.table.get_mut(&pkt.dst) {
            e.expires_at = e.expires_at.max(expires);
            if let Some(p) = prev_hop {
                e.precursors.insert(p);
            }
        }
    }

    fn on_no_route(&mut self, ctx: &mut RouterCtx<'_, Self>, pkt: DataPacket, prev_hop: Option<NodeId>) {
        if pkt.origin != self.id {
            if let Some(prev) = prev_hop {
                let seqno = self.table.get(&pkt.dst).map_or(0, |e| e.dst_seqno);
                self.send_rerr(ctx, vec![(pkt.dst, seqno)], BTreeSet::from([prev]));
            }
            ctx.drop_data(pkt, DropReason::Nrte);
            return;
        }
        let dst = pkt.dst;
        if !self.pending.contains_key(&dst) {
            let generation = self.next_generation;
            self.next_generation += 1;
            self.pending.insert(
                dst,
                Discovery {
                    buffer: VecDeque::new(),
                    retries_left: self.cfg.rreq_retries,
                    generation,
                },
            );
            self.originate_rreq(ctx, dst, generation);
        }
        if let Some(old) = self.enqueue(pkt) {
            ctx.drop_data(old, DropReason::Nrte);
        }
    }

    fn on_control(&mut self, ctx: &mut RouterCtx<'_, Self>, msg: AodvMsg, from: NodeId) {
        match msg {
            AodvMsg::Rreq(r) if r.origin == self.id => ctx.drop_control(DropReason::Dup),
            AodvMsg::Rreq(r) => self.handle_rreq(ctx, r, from),
            AodvMsg::Rrep(r) => self.handle_rrep(ctx, r, from),
            AodvMsg::Rerr(e) => self.handle_rerr(ctx, e, from),
        }
    }

    fn on_link_failure(&mut self, ctx: &mut RouterCtx<'_, Self>, neighbor: NodeId) {
        let mut lost = Vec::new();
        let mut upstream = BTreeSet::new();
        for e in self.table.values_mut() {
            if e.valid && e.next_hop == neighbor {
                e.valid = false;
                e.dst_seqno += 1;
                lost.push((e.dst, e.dst_seqno));
                upstream.extend(e.precursors.iter().copied());
            }
        }
        upstream.remove(&neighbor);
        self.send_rerr(ctx, lost, upstream);
    }

    fn on_timer(&mut self, ctx: &mut RouterCtx<'_, Self>, tag: AodvTimer) {
        match tag {
            AodvTimer::RreqDecide { origin, rreq_id } => self.decide_rreq(ctx, origin, rreq_id),
            AodvTimer::RreqWait { dst, generation } => {
                let Some(d) = self.pending.get_mut(&dst) else { return };
                if d.generation != generation {
                    return;
                }
                if d.retries_left > 0 {
                    d.retries_left -= 1;
                    let next = self.next_generation;
                    self.next_generation += 1;
                    d.generation = next;
                    self.originate_rreq(ctx, dst, next);
                } else {
                    let d = self.pending.remove(&dst).expect("present");
                    for pkt in d.buffer {
                        ctx.drop_data(pkt, DropReason::Nrte);
                    }
                }
            }
            AodvTimer::Recycle => {
                self.recycle_routes(ctx.now);
                ctx.timer(self.cfg.recycle_interval, AodvTimer::Recycle);
            }
        }
    }
}
