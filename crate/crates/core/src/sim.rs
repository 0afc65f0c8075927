//! One simulation run: glues mobility, medium, traffic and a routing
//! protocol together over the event kernel, and feeds every trace record to
//! the writer and the streaming convergence analyzer.

use crate::config::{ConfigError, ScenarioConfig};
use crate::kernel::{RngStream, Scheduled, Scheduler, SimTime, StreamLabel, Ticket};
use crate::medium::{Attempt, LinkModel, Medium};
use crate::metering::{ConvergenceAnalyzer, ConvergenceReport, Layer, PacketKind, TraceAction, TraceRecord, TraceWriter};
use crate::mobility::{Leg, Mobility, Point};
use crate::routing::{advance_hop, forward_decision, Action, Ctx, DataPacket, DropReason, Forwarding, Router, RouterCtx};
use crate::traffic::{generate_flows, FlowSpec};
use crate::{FlowId, NodeId};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trace output failed: {0}")]
    Io(#[from] io::Error),
}

/// Run-wide settings that do not depend on the protocol.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    pub duration: SimTime,
    pub seed: u64,
    pub link: LinkModel,
    pub sense_interval: SimTime,
    /// Report link changes from periodic sensing to every protocol, not
    /// only those that ask for it.
    pub hello_detection: bool,
    pub audit_loops: bool,
}

impl SimParams {
    pub fn from_scenario(cfg: &ScenarioConfig) -> Self {
        SimParams {
            duration: cfg.duration,
            seed: cfg.seed,
            link: cfg.link,
            sense_interval: cfg.sense_interval,
            hello_detection: cfg.hello_detection,
            audit_loops: cfg.audit_loops,
        }
    }
}

#[derive(Clone, Debug)]
enum Payload<M> {
    Data(DataPacket),
    Control(M),
}

#[derive(Debug)]
enum Event<M, T> {
    Mobility(NodeId),
    Inject { flow: usize, seq: u64 },
    Arrive { to: NodeId, from: NodeId, payload: Payload<M>, broadcast: bool },
    Retry { from: NodeId, to: NodeId, payload: Payload<M>, attempt: u32 },
    Timer { node: NodeId, tag: T },
    Sense,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimStats {
    pub injected: u64,
    /// Distinct (flow, seq) pairs delivered.
    pub delivered: u64,
    pub control_packets: u64,
    pub data_transmissions: u64,
    pub link_failures: u64,
    pub drops: BTreeMap<DropReason, u64>,
    /// Times of loop drops, for audits.
    pub loop_drops: Vec<SimTime>,
    /// Hop count of every delivery, with its flow and time.
    pub deliveries: Vec<(FlowId, SimTime, u32)>,
}

impl SimStats {
    pub fn delivery_ratio(&self) -> f64 {
        if self.injected == 0 {
            0.0
        } else {
            self.delivered as f64 / self.injected as f64
        }
    }

    pub fn dropped(&self, reason: DropReason) -> u64 {
        self.drops.get(&reason).copied().unwrap_or(0)
    }
}

#[derive(Debug)]
pub struct SimOutcome {
    pub report: ConvergenceReport,
    pub stats: SimStats,
    pub legs: Vec<Leg>,
    pub flows: Vec<FlowSpec>,
}

pub struct Simulation<R: Router> {
    params: SimParams,
    sched: Scheduler<Event<R::Msg, R::Timer>>,
    mobility: Mobility,
    mobility_tickets: Vec<Option<Ticket>>,
    medium: Medium,
    routers: Vec<R>,
    flows: Vec<FlowSpec>,
    rng_mobility: RngStream,
    rng_medium: RngStream,
    rng_protocol: RngStream,
    writer: TraceWriter,
    analyzer: ConvergenceAnalyzer,
    belief: Vec<BTreeSet<NodeId>>,
    delivered: HashSet<(FlowId, u64)>,
    stats: SimStats,
    io_error: Option<io::Error>,
}

impl<R: Router> Simulation<R> {
    /// Builds a run over an explicit mobility model and flow set.
    pub fn new(params: SimParams, proto: &R::Config, mobility: Mobility, flows: Vec<FlowSpec>, writer: TraceWriter) -> Self {
        let n = mobility.len();
        let mut sim = Simulation {
            params,
            sched: Scheduler::new(),
            mobility,
            mobility_tickets: vec![None; n],
            medium: Medium::new(params.link),
            routers: (0..n as u32).map(|i| R::new(NodeId(i), n, proto)).collect(),
            flows,
            rng_mobility: RngStream::new(params.seed, StreamLabel::Mobility),
            rng_medium: RngStream::new(params.seed, StreamLabel::MediumJitter),
            rng_protocol: RngStream::new(params.seed, StreamLabel::ProtocolJitter),
            writer,
            analyzer: ConvergenceAnalyzer::new(),
            belief: vec![BTreeSet::new(); n],
            delivered: HashSet::new(),
            stats: SimStats::default(),
            io_error: None,
        };
        sim.boot();
        sim
    }

    /// Builds a run from a scenario: random waypoint mobility and random
    /// flows, both drawn from the scenario seed.
    pub fn from_scenario(cfg: &ScenarioConfig, proto: &R::Config, mut writer: TraceWriter) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut rng_mob = RngStream::new(cfg.seed, StreamLabel::Mobility);
        let mobility = Mobility::new(cfg.n_nodes, cfg.arena, cfg.waypoint(), &mut rng_mob)
            .map_err(|e| ConfigError(e.to_string()))?;
        let mut rng_traffic = RngStream::new(cfg.seed, StreamLabel::Traffic);
        let flows = generate_flows(cfg.n_nodes, &cfg.traffic, cfg.duration, &mut rng_traffic)
            .map_err(|e| ConfigError(e.to_string()))?;
        writer.header(&cfg.summary())?;
        for f in &flows {
            writer.header(&f.to_string())?;
        }
        let mut sim = Self::new(SimParams::from_scenario(cfg), proto, mobility, flows, writer);
        // Keep drawing mobility from where initial placement stopped.
        sim.rng_mobility = rng_mob;
        Ok(sim)
    }

    fn boot(&mut self) {
        let end = self.params.duration;
        for i in 0..self.mobility.len() {
            let at = self.mobility.states()[i].phase_end;
            if at < end {
                let t = self.sched.schedule(at, Event::Mobility(NodeId(i as u32))).expect("future");
                self.mobility_tickets[i] = Some(t);
            }
        }
        for (idx, f) in self.flows.iter().enumerate() {
            if f.packet_count() > 0 {
                self.sched.schedule(f.emit_time(0), Event::Inject { flow: idx, seq: 0 }).expect("future");
            }
        }
        if R::NEIGHBOR_SENSING || self.params.hello_detection {
            self.sched.schedule(SimTime::ZERO, Event::Sense).expect("future");
        }
        for i in 0..self.routers.len() {
            self.dispatch(NodeId(i as u32), |r, ctx| r.start(ctx));
        }
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn routers(&self) -> &[R] {
        &self.routers
    }

    pub fn router(&self, node: NodeId) -> &R {
        &self.routers[node.index()]
    }

    pub fn mobility(&self) -> &Mobility {
        &self.mobility
    }

    pub fn flows(&self) -> &[FlowSpec] {
        &self.flows
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    pub fn samples(&self) -> &[crate::metering::ConvergenceSample] {
        self.analyzer.samples()
    }

    /// Current unit-disk neighbors of `node`.
    pub fn neighbors(&self, node: NodeId) -> Vec<NodeId> {
        self.medium.neighbors(&self.mobility, node, self.now())
    }

    pub fn position(&self, node: NodeId) -> Point {
        self.mobility.position(node, self.now())
    }

    /// Moves `node` to `p` immediately and freezes it there.
    pub fn teleport(&mut self, node: NodeId, p: Point) {
        if let Some(t) = self.mobility_tickets[node.index()].take() {
            self.sched.cancel(t);
        }
        let now = self.now();
        self.mobility.teleport(node, p, now);
    }

    /// Processes every event due at or before `t`.
    pub fn run_until(&mut self, t: SimTime) {
        let end = t.min(self.params.duration);
        while let Some(ev) = self.sched.pop_until(end) {
            self.handle(ev);
        }
        self.sched.advance_to(end);
    }

    pub fn run(mut self) -> Result<SimOutcome, SimError> {
        self.run_until(self.params.duration);
        self.finish()
    }

    pub fn finish(mut self) -> Result<SimOutcome, SimError> {
        if let Some(e) = self.io_error.take() {
            return Err(e.into());
        }
        self.writer.flush()?;
        Ok(SimOutcome {
            report: self.analyzer.finish(),
            stats: self.stats,
            legs: self.mobility.legs().to_vec(),
            flows: self.flows,
        })
    }

    fn trace(&mut self, rec: TraceRecord) {
        self.analyzer.observe(&rec);
        if let Err(e) = self.writer.record(&rec) {
            self.io_error.get_or_insert(e);
        }
    }

    fn data_record(&self, action: TraceAction, node: NodeId, layer: Layer, pkt: &DataPacket, reason: Option<DropReason>) -> TraceRecord {
        TraceRecord {
            action,
            time: self.now(),
            node,
            layer,
            kind: PacketKind::Cbr,
            flow: Some(pkt.flow),
            seq: Some(pkt.seq),
            src: pkt.origin,
            dst: Some(pkt.dst),
            reason,
        }
    }

    fn control_record(&self, action: TraceAction, node: NodeId, src: NodeId, dst: Option<NodeId>, reason: Option<DropReason>) -> TraceRecord {
        TraceRecord {
            action,
            time: self.now(),
            node,
            layer: Layer::Rtr,
            kind: R::KIND,
            flow: None,
            seq: None,
            src,
            dst,
            reason,
        }
    }

    fn handle(&mut self, ev: Scheduled<Event<R::Msg, R::Timer>>) {
        match ev.payload {
            Event::Mobility(node) => {
                self.mobility_tickets[node.index()] = None;
                let now = self.now();
                let next = self
                    .mobility
                    .advance(node, now, &mut self.rng_mobility)
                    .expect("waypoint parameters were validated");
                if next < self.params.duration {
                    let t = self.sched.schedule(next, Event::Mobility(node)).expect("future");
                    self.mobility_tickets[node.index()] = Some(t);
                }
            }
            Event::Inject { flow, seq } => self.inject(flow, seq),
            Event::Arrive { to, from, payload, broadcast } => self.arrive(to, from, payload, broadcast),
            Event::Retry { from, to, payload, attempt } => self.unicast(from, to, payload, attempt),
            Event::Timer { node, tag } => self.dispatch(node, |r, ctx| r.on_timer(ctx, tag)),
            Event::Sense => self.sense(),
        }
    }

    fn inject(&mut self, flow: usize, seq: u64) {
        let f = self.flows[flow];
        if seq + 1 < f.packet_count() {
            let at = f.emit_time(seq + 1);
            self.sched.schedule(at, Event::Inject { flow, seq: seq + 1 }).expect("future");
        }
        let pkt = DataPacket::new(f.flow, seq, f.src, f.dst, f.packet_size, self.now());
        self.stats.injected += 1;
        let rec = self.data_record(TraceAction::Send, f.src, Layer::Agt, &pkt, None);
        self.trace(rec);
        self.route_data(f.src, pkt, None);
    }

    fn route_data(&mut self, node: NodeId, pkt: DataPacket, prev_hop: Option<NodeId>) {
        let now = self.now();
        match forward_decision(&self.routers[node.index()], node, &pkt, now, self.params.audit_loops) {
            Forwarding::Deliver => {
                let rec = self.data_record(TraceAction::Recv, node, Layer::Agt, &pkt, None);
                self.trace(rec);
                if self.delivered.insert((pkt.flow, pkt.seq)) {
                    self.stats.delivered += 1;
                }
                self.stats.deliveries.push((pkt.flow, now, pkt.hop_count));
            }
            Forwarding::NextHop(next) => {
                self.dispatch(node, |r, ctx| r.on_forward(ctx, &pkt, prev_hop, next));
                self.transmit_data(node, next, pkt);
            }
            Forwarding::NoRoute => self.dispatch(node, |r, ctx| r.on_no_route(ctx, pkt, prev_hop)),
            Forwarding::Drop(reason) => self.drop_data(node, &pkt, reason),
        }
    }

    fn transmit_data(&mut self, node: NodeId, next: NodeId, mut pkt: DataPacket) {
        advance_hop(&mut pkt, node, self.params.audit_loops);
        self.stats.data_transmissions += 1;
        let rec = self.data_record(TraceAction::Send, node, Layer::Rtr, &pkt, None);
        self.trace(rec);
        self.unicast(node, next, Payload::Data(pkt), 1);
    }

    fn drop_data(&mut self, node: NodeId, pkt: &DataPacket, reason: DropReason) {
        *self.stats.drops.entry(reason).or_default() += 1;
        if reason == DropReason::Loop {
            self.stats.loop_drops.push(self.now());
        }
        let rec = self.data_record(TraceAction::Drop, node, Layer::Rtr, pkt, Some(reason));
        self.trace(rec);
    }

    fn payload_size(payload: &Payload<R::Msg>) -> u32 {
        match payload {
            Payload::Data(p) => p.size,
            Payload::Control(m) => R::msg_size(m),
        }
    }

    fn unicast(&mut self, from: NodeId, to: NodeId, payload: Payload<R::Msg>, attempt: u32) {
        let now = self.now();
        let size = Self::payload_size(&payload);
        let outcome = self
            .medium
            .unicast_attempt(&self.mobility, from, to, size, attempt, now, &mut self.rng_medium)
            .expect("routers never address themselves");
        match outcome {
            Attempt::Delivered(at) => {
                let ev = Event::Arrive { to, from, payload, broadcast: false };
                self.sched.schedule(at, ev).expect("future");
            }
            Attempt::RetryAt(at) => {
                let ev = Event::Retry { from, to, payload, attempt: attempt + 1 };
                self.sched.schedule(at, ev).expect("future");
            }
            Attempt::LinkFailure => self.link_failure(from, to, payload),
        }
    }

    fn link_failure(&mut self, from: NodeId, to: NodeId, payload: Payload<R::Msg>) {
        self.stats.link_failures += 1;
        match &payload {
            Payload::Data(pkt) => {
                let mut rec = self.data_record(TraceAction::LinkFailure, from, Layer::Rtr, pkt, None);
                rec.src = from;
                rec.dst = Some(to);
                self.trace(rec);
                self.drop_data(from, pkt, DropReason::Llf);
            }
            Payload::Control(_) => {
                let rec = self.control_record(TraceAction::LinkFailure, from, from, Some(to), None);
                self.trace(rec);
                *self.stats.drops.entry(DropReason::Llf).or_default() += 1;
                let rec = self.control_record(TraceAction::Drop, from, from, Some(to), Some(DropReason::Llf));
                self.trace(rec);
            }
        }
        self.belief[from.index()].remove(&to);
        self.dispatch(from, |r, ctx| r.on_link_failure(ctx, to));
    }

    fn arrive(&mut self, to: NodeId, from: NodeId, payload: Payload<R::Msg>, broadcast: bool) {
        match payload {
            Payload::Data(pkt) => {
                if pkt.dst != to {
                    let rec = self.data_record(TraceAction::Recv, to, Layer::Rtr, &pkt, None);
                    self.trace(rec);
                }
                self.route_data(to, pkt, Some(from));
            }
            Payload::Control(msg) => {
                let dst = (!broadcast).then_some(to);
                let rec = self.control_record(TraceAction::Recv, to, from, dst, None);
                self.trace(rec);
                self.dispatch(to, |r, ctx| r.on_control(ctx, msg, from));
            }
        }
    }

    /// Periodic neighbor sensing: reports link changes since the last scan.
    fn sense(&mut self) {
        let now = self.now();
        for i in 0..self.routers.len() {
            let node = NodeId(i as u32);
            let current: BTreeSet<NodeId> = self.medium.neighbors(&self.mobility, node, now).into_iter().collect();
            let lost: Vec<NodeId> = self.belief[i].difference(&current).copied().collect();
            let gained: Vec<NodeId> = current.difference(&self.belief[i]).copied().collect();
            self.belief[i] = current;
            for n in lost {
                self.dispatch(node, |r, ctx| r.on_link_down(ctx, n));
            }
            for n in gained {
                self.dispatch(node, |r, ctx| r.on_link_up(ctx, n));
            }
        }
        let next = now + self.params.sense_interval;
        if next <= self.params.duration {
            self.sched.schedule(next, Event::Sense).expect("future");
        }
    }

    /// Runs one router hook and carries out the actions it queued.
    fn dispatch<F>(&mut self, node: NodeId, hook: F)
    where
        F: FnOnce(&mut R, &mut RouterCtx<'_, R>),
    {
        let mut actions = Vec::new();
        {
            let now = self.sched.now();
            let mut ctx = Ctx::new(now, node, &mut self.rng_protocol, &mut actions);
            hook(&mut self.routers[node.index()], &mut ctx);
        }
        for action in actions {
            self.apply(node, action);
        }
    }

    fn apply(&mut self, node: NodeId, action: Action<R::Msg, R::Timer>) {
        match action {
            Action::Broadcast(msg) => {
                self.stats.control_packets += 1;
                let rec = self.control_record(TraceAction::Send, node, node, None, None);
                self.trace(rec);
                let now = self.now();
                let size = R::msg_size(&msg);
                let receivers = self.medium.broadcast(&self.mobility, node, size, now, &mut self.rng_medium);
                for (to, at) in receivers {
                    let ev = Event::Arrive {
                        to,
                        from: node,
                        payload: Payload::Control(msg.clone()),
                        broadcast: true,
                    };
                    self.sched.schedule(at, ev).expect("future");
                }
            }
            Action::Unicast(to, msg) => {
                self.stats.control_packets += 1;
                let rec = self.control_record(TraceAction::Send, node, node, Some(to), None);
                self.trace(rec);
                self.unicast(node, to, Payload::Control(msg), 1);
            }
            Action::Forward(pkt) => self.route_data(node, pkt, None),
            Action::DropData(pkt, reason) => self.drop_data(node, &pkt, reason),
            Action::DropControl(reason) => {
                *self.stats.drops.entry(reason).or_default() += 1;
                let rec = self.control_record(TraceAction::Drop, node, node, None, Some(reason));
                self.trace(rec);
            }
            Action::Timer(delay, tag) => {
                self.sched.schedule_in(delay, Event::Timer { node, tag });
            }
        }
    }
}
