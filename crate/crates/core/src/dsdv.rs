//! Destination-Sequenced Distance Vector routing.
//!
//! Each destination stamps its own advertisements with an even sequence
//! number that it raises by two on every full dump. A broken route is
//! advertised with an infinite metric and the next odd number, so only a
//! fresher advertisement from the destination can repair it.

use crate::kernel::SimTime;
use crate::metering::PacketKind;
use crate::routing::{DataPacket, DropReason, Router, RouterCtx};
use crate::NodeId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const INFINITE_METRIC: u32 = u32::MAX;

const ADVERT_BYTES: u32 = 12;
const HEADER_BYTES: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsdvConfig {
    pub full_dump_interval: SimTime,
    pub triggered_update_delay: SimTime,
    pub settling_time: SimTime,
    pub entry_timeout: SimTime,
}

impl Default for DsdvConfig {
    fn default() -> Self {
        DsdvConfig {
            full_dump_interval: SimTime::from_secs(15),
            triggered_update_delay: SimTime::from_micros(500_000),
            settling_time: SimTime::ZERO,
            entry_timeout: SimTime::from_secs(45),
        }
    }
}

impl DsdvConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.full_dump_interval == SimTime::ZERO {
            return Err("DSDV full_dump_interval must be positive".into());
        }
        if self.triggered_update_delay == SimTime::ZERO {
            return Err("DSDV triggered_update_delay must be positive".into());
        }
        if self.entry_timeout == SimTime::ZERO {
            return Err("DSDV entry_timeout must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DsdvEntry {
    pub dst: NodeId,
    pub next_hop: NodeId,
    pub metric: u32,
    pub seqno: u64,
    pub installed_at: SimTime,
    refreshed_at: SimTime,
}

impl DsdvEntry {
    pub fn is_valid(&self) -> bool {
        self.metric != INFINITE_METRIC
    }
}

/// One advertised route.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Advert {
    pub dst: NodeId,
    pub seqno: u64,
    pub metric: u32,
}

impl Advert {
    fn well_formed(&self) -> bool {
        (self.seqno % 2 == 0) == (self.metric != INFINITE_METRIC)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DsdvUpdate {
    pub full: bool,
    pub entries: Vec<Advert>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsdvTimer {
    FullDump,
    Triggered,
}

#[derive(Debug)]
pub struct DsdvNode {
    id: NodeId,
    cfg: DsdvConfig,
    table: BTreeMap<NodeId, DsdvEntry>,
    changed: BTreeSet<NodeId>,
    trigger_pending: bool,
    malformed: u64,
    own_seqnos: Vec<u64>,
}

impl DsdvNode {
    pub fn seqno(&self) -> u64 {
        self.table[&self.id].seqno
    }

    pub fn table(&self) -> &BTreeMap<NodeId, DsdvEntry> {
        &self.table
    }

    pub fn entry(&self, dst: NodeId) -> Option<&DsdvEntry> {
        self.table.get(&dst)
    }

    /// Updates dropped for violating the parity rule.
    pub fn malformed_updates(&self) -> u64 {
        self.malformed
    }

    /// Every sequence number this node has advertised for itself, in order.
    pub fn advertised_seqnos(&self) -> &[u64] {
        &self.own_seqnos
    }

    fn advert(e: &DsdvEntry) -> Advert {
        Advert {
            dst: e.dst,
            seqno: e.seqno,
            metric: e.metric,
        }
    }

    fn send(&mut self, ctx: &mut RouterCtx<'_, Self>, full: bool, entries: Vec<Advert>) {
        if entries.is_empty() {
            return;
        }
        if let Some(own) = entries.iter().find(|a| a.dst == self.id) {
            if self.own_seqnos.last() != Some(&own.seqno) {
                self.own_seqnos.push(own.seqno);
            }
        }
        ctx.broadcast(DsdvUpdate { full, entries });
    }

    fn periodic_full_dump(&mut self, ctx: &mut RouterCtx<'_, Self>) {
        let now = ctx.now;
        let timeout = self.cfg.entry_timeout;
        let id = self.id;
        for e in self.table.values_mut() {
            if e.dst != id && e.is_valid() && now.saturating_sub(e.refreshed_at) > timeout {
                e.metric = INFINITE_METRIC;
                e.seqno += 1;
                e.installed_at = now;
            }
        }
        let own = self.table.get_mut(&id).expect("self entry");
        own.seqno += 2;
        own.installed_at = now;
        let entries = self.table.values().map(Self::advert).collect();
        self.changed.clear();
        self.send(ctx, true, entries);
        ctx.timer(self.cfg.full_dump_interval, DsdvTimer::FullDump);
    }

    fn triggered_update(&mut self, ctx: &mut RouterCtx<'_, Self>) {
        self.trigger_pending = false;
        let changed = std::mem::take(&mut self.changed);
        let entries = changed.iter().filter_map(|d| self.table.get(d)).map(Self::advert).collect();
        self.send(ctx, false, entries);
    }

    fn schedule_trigger(&mut self, ctx: &mut RouterCtx<'_, Self>) {
        if !self.trigger_pending {
            self.trigger_pending = true;
            let delay = self.cfg.triggered_update_delay.max(self.cfg.settling_time);
            ctx.timer(delay, DsdvTimer::Triggered);
        }
    }

    pub fn handle_update(&mut self, ctx: &mut RouterCtx<'_, Self>, update: &DsdvUpdate, from: NodeId) {
        if !update.entries.iter().all(Advert::well_formed) {
            self.malformed += 1;
            return;
        }
        let now = ctx.now;
        let mut changed_any = false;
        for adv in &update.entries {
            if adv.dst == self.id {
                continue;
            }
            let metric = adv.metric.saturating_add(1);
            let adopt = match self.table.get(&adv.dst) {
                None => metric != INFINITE_METRIC,
                Some(e) => adv.seqno > e.seqno || (adv.seqno == e.seqno && metric < e.metric),
            };
            if adopt {
                self.table.insert(
                    adv.dst,
                    DsdvEntry {
                        dst: adv.dst,
                        next_hop: from,
                        metric,
                        seqno: adv.seqno,
                        installed_at: now,
                        refreshed_at: now,
                    },
                );
                self.changed.insert(adv.dst);
                changed_any = true;
            } else if let Some(e) = self.table.get_mut(&adv.dst) {
                if e.next_hop == from && e.seqno == adv.seqno {
                    e.refreshed_at = now;
                }
            }
        }
        if changed_any {
            self.schedule_trigger(ctx);
        }
    }
}

impl Router for DsdvNode {
    type Config = DsdvConfig;
    type Msg = DsdvUpdate;
    type Timer = DsdvTimer;
    const KIND: PacketKind = PacketKind::Dsdv;

    fn new(node: NodeId, _n_nodes: usize, cfg: &DsdvConfig) -> Self {
        let mut table = BTreeMap::new();
        table.insert(
            node,
            DsdvEntry {
                dst: node,
                next_hop: node,
                metric: 0,
                seqno: 0,
                installed_at: SimTime::ZERO,
                refreshed_at: SimTime::ZERO,
            },
        );
        DsdvNode {
            id: node,
            cfg: *cfg,
            table,
            changed: BTreeSet::new(),
            trigger_pending: false,
            malformed: 0,
            own_seqnos: Vec::new(),
        }
    }

    fn msg_size(msg: &DsdvUpdate) -> u32 {
        HEADER_BYTES + ADVERT_BYTES * msg.entries.len() as u32
    }

    fn start(&mut self, ctx: &mut RouterCtx<'_, Self>) {
        let phase = ctx.rng.jitter(self.cfg.full_dump_interval);
        ctx.timer(phase, DsdvTimer::FullDump);
    }

    fn route_lookup(&self, dst: NodeId, _now: SimTime) -> Option<NodeId> {
        self.table
            .get(&dst)
            .filter(|e| e.is_valid() && e.dst != self.id)
            .map(|e| e.next_hop)
    }

    fn on_no_route(&mut self, ctx: &mut RouterCtx<'_, Self>, pkt: DataPacket, _prev_hop: Option<NodeId>) {
        ctx.drop_data(pkt, DropReason::Nrte);
    }

    fn on_control(&mut self, ctx: &mut RouterCtx<'_, Self>, msg: DsdvUpdate, from: NodeId) {
        self.handle_update(ctx, &msg, from);
    }

    fn on_link_failure(&mut self, ctx: &mut RouterCtx<'_, Self>, neighbor: NodeId) {
        let now = ctx.now;
        let mut poisoned = Vec::new();
        for e in self.table.values_mut() {
            if e.next_hop == neighbor && e.is_valid() && e.dst != self.id {
                e.metric = INFINITE_METRIC;
                e.seqno += 1;
                e.installed_at = now;
                poisoned.push(Self::advert(e));
                self.changed.remove(&e.dst);
            }
        }
        self.send(ctx, false, poisoned);
    }

    fn on_timer(&mut self, ctx: &mut RouterCtx<'_, Self>, tag: DsdvTimer) {
        match tag {
            DsdvTimer::FullDump => self.periodic_full_dump(ctx),
            DsdvTimer::Triggered => self.triggered_update(ctx),
        }
    }
}
