//! Checks shared by the integration suites and the acceptance report.
#![allow(dead_code)]

use manet_core::aodv::{AodvConfig, AodvNode};
use manet_core::dsdv::{DsdvConfig, DsdvNode, INFINITE_METRIC};
use manet_core::kernel::{RngStream, SimTime, StreamLabel};
use manet_core::medium::LinkModel;
use manet_core::metering::{convergence_events, ParseMode, TraceWriter};
use manet_core::mobility::{Arena, Mobility, Point, WaypointParams};
use manet_core::routing::{DropReason, Router};
use manet_core::runner::{run_detailed, RunResult};
use manet_core::sim::{SimParams, Simulation};
use manet_core::tora::{LinkDirection, ToraConfig, ToraNode};
use manet_core::traffic::{generate_flows, FlowSpec, TrafficConfig};
use manet_core::{FlowId, NodeId, Protocol, ScenarioConfig};
use manet_oracle::{bfs_hops_from, bfs_shortest_paths, detect_cycles, reanalyze};
use std::io::{self, Write};
use std::sync::{Arc, Mutex};

pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Check {
            pass,
            detail: detail.into(),
        }
    }
}

/// In-memory trace sink that can be read back after the run.
#[derive(Clone, Default)]
pub struct SharedBuf(Arc<Mutex<Vec<u8>>>);

impl SharedBuf {
    pub fn bytes(&self) -> Vec<u8> {
        self.0.lock().unwrap().clone()
    }

    pub fn writer(&self) -> TraceWriter {
        TraceWriter::new(Box::new(self.clone()))
    }
}

impl Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub fn arena() -> Arena {
    Arena::default()
}

/// Uniform random layout in the default arena.
pub fn random_layout(n: usize, seed: u64) -> Vec<Point> {
    random_layout_in(n, seed, arena())
}

pub fn random_layout_in(n: usize, seed: u64, area: Arena) -> Vec<Point> {
    let mut rng = RngStream::new(seed, StreamLabel::Mobility);
    (0..n).map(|_| area.sample(&mut rng).unwrap()).collect()
}

/// A long strip, so that routes span several hops.
pub fn strip() -> Arena {
    Arena {
        width: 1000.0,
        height: 400.0,
    }
}

pub fn coords(points: &[Point]) -> Vec<(f64, f64)> {
    points.iter().map(|p| (p.x, p.y)).collect()
}

pub fn static_params(secs: u64, seed: u64, audit: bool) -> SimParams {
    SimParams {
        duration: SimTime::from_secs(secs),
        seed,
        link: LinkModel::default(),
        sense_interval: SimTime::from_micros(100_000),
        hello_detection: false,
        audit_loops: audit,
    }
}

pub fn static_flows(n: usize, seed: u64, stop: SimTime) -> Vec<FlowSpec> {
    let mut rng = RngStream::new(seed, StreamLabel::Traffic);
    generate_flows(n, &TrafficConfig::default(), stop, &mut rng).unwrap()
}

pub fn single_flow(src: NodeId, dst: NodeId, start: SimTime, stop: SimTime) -> FlowSpec {
    FlowSpec {
        flow: FlowId(0),
        src,
        dst,
        rate: 10.0,
        packet_size: 512,
        start,
        stop,
    }
}

/// Layout sizes used by the static suites: ten layouts from 10 to 50 nodes.
pub fn static_suite() -> Vec<(usize, u64)> {
    (0..10).map(|i| (10 + i * 40 / 9, 1000 + i as u64)).collect()
}

/// Directed links `i -> j` where `i` sees `j` lower than itself for `dst`.
pub fn tora_edges(routers: &[ToraNode], dst: NodeId) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for (i, r) in routers.iter().enumerate() {
        for l in r.link_states(dst) {
            if l.direction == LinkDirection::Downstream {
                edges.push((i, l.neighbor.index()));
            }
        }
    }
    edges
}

/// Cycle count over every active destination of a TORA snapshot.
pub fn tora_cycles(routers: &[ToraNode]) -> usize {
    let mut dsts: Vec<NodeId> = routers.iter().flat_map(|r| r.active_destinations()).collect();
    dsts.sort();
    dsts.dedup();
    dsts.into_iter()
        .map(|d| detect_cycles(routers.len(), &tora_edges(routers, d)).len())
        .sum()
}

fn loop_drops_after<R: Router>(proto: &R::Config, n: usize, seed: u64, secs: u64, window: SimTime) -> (usize, usize) {
    let pts = random_layout(n, seed);
    let stop = SimTime::from_secs(secs);
    let sim = Simulation::<R>::new(
        static_params(secs, seed, true),
        proto,
        Mobility::fixed(&pts, arena()),
        static_flows(n, seed, stop),
        TraceWriter::discard(),
    );
    let out = sim.run().unwrap();
    let late = out.stats.loop_drops.iter().filter(|t| **t >= window).count();
    (late, out.stats.loop_drops.len())
}

/// Loop freedom on frozen layouts, plus acyclic TORA snapshots.
pub fn check_loop_freedom() -> Check {
    let mut late = [0usize; 3];
    let mut total = [0usize; 3];
    let mut cycles = 0;
    let mut snapshots = 0;
    for (n, seed) in static_suite() {
        let dsdv = DsdvConfig::default();
        let (l, t) = loop_drops_after::<DsdvNode>(&dsdv, n, seed, 60, dsdv.full_dump_interval + dsdv.full_dump_interval);
        late[0] += l;
        total[0] += t;
        let (l, t) = loop_drops_after::<AodvNode>(&AodvConfig::default(), n, seed, 40, SimTime::from_secs(10));
        late[1] += l;
        total[1] += t;
        let (l, t) = loop_drops_after::<ToraNode>(&ToraConfig::default(), n, seed, 40, SimTime::from_secs(10));
        late[2] += l;
        total[2] += t;

        // Quiescent TORA snapshots every 10 s.
        let pts = random_layout(n, seed);
        let mut sim = Simulation::<ToraNode>::new(
            static_params(40, seed, true),
            &ToraConfig::default(),
            Mobility::fixed(&pts, arena()),
            static_flows(n, seed, SimTime::from_secs(40)),
            TraceWriter::discard(),
        );
        for t in [12, 22, 32, 40] {
            sim.run_until(SimTime::from_secs(t));
            cycles += tora_cycles(sim.routers());
            snapshots += 1;
        }
    }
    let pass = late.iter().all(|&l| l == 0) && cycles == 0;
    Check::new(
        pass,
        format!(
            "late LOOP drops DSDV={} AODV={} TORA={} (all-time {}/{}/{}); TORA cycles {} over {} snapshots",
            late[0], late[1], late[2], total[0], total[1], total[2], cycles, snapshots
        ),
    )
}

/// DSDV tables after two full-dump periods and AODV discoveries on frozen
/// layouts, against BFS hop counts.
pub fn check_shortest_paths() -> Check {
    let mut dsdv_checked = 0;
    let mut dsdv_bad = Vec::new();
    let mut aodv_checked = 0;
    let mut aodv_bad = Vec::new();
    for (n, seed) in static_suite() {
        let pts = random_layout_in(n, seed, strip());
        let hops = bfs_shortest_paths(&coords(&pts), LinkModel::default().range);

        // A destination's column is judged just before its next periodic
        // dump, once the previous sequence number has had a full period to
        // settle.
        let cfg = DsdvConfig::default();
        let mut sim = Simulation::<DsdvNode>::new(
            static_params(60, seed, false),
            &cfg,
            Mobility::fixed(&pts, strip()),
            Vec::new(),
            TraceWriter::discard(),
        );
        let start = cfg.full_dump_interval + cfg.full_dump_interval;
        sim.run_until(start);
        let metric = |sim: &Simulation<DsdvNode>, i: usize, j: usize| sim.routers()[i].entry(NodeId(j as u32)).map(|e| e.metric);
        let mut prev: Vec<Vec<Option<u32>>> = (0..n).map(|i| (0..n).map(|j| metric(&sim, i, j)).collect()).collect();
        let mut prev_seq: Vec<u64> = sim.routers().iter().map(|r| r.seqno()).collect();
        let mut judged = vec![false; n];
        let step = SimTime::from_micros(100_000);
        let mut t = start;
        while judged.iter().any(|j| !j) && t < start + cfg.full_dump_interval + SimTime::from_secs(1) {
            t = t + step;
            sim.run_until(t);
            for j in 0..n {
                let seq = sim.routers()[j].seqno();
                if seq != prev_seq[j] && !judged[j] {
                    judged[j] = true;
                    for i in 0..n {
                        let Some(h) = hops[i][j] else { continue };
                        if i == j {
                            continue;
                        }
                        dsdv_checked += 1;
                        let got = prev[i][j];
                        if got != Some(h) || got == Some(INFINITE_METRIC) {
                            dsdv_bad.push(format!("n{n} {i}->{j}: {got:?} vs {h}"));
                        }
                    }
                }
                prev_seq[j] = seq;
            }
            prev = (0..n).map(|i| (0..n).map(|j| metric(&sim, i, j)).collect()).collect();
        }
        if judged.iter().any(|j| !j) {
            dsdv_bad.push(format!("n{n}: some destinations never dumped"));
        }

        // One flow per run so every route comes from a fresh discovery.
        for f in static_flows(n, seed, SimTime::from_secs(4)) {
            let (s, d) = (f.src.index(), f.dst.index());
            if hops[s][d].is_none() {
                continue;
            }
            let flow = single_flow(f.src, f.dst, SimTime::from_secs(1), SimTime::from_secs(3));
            let mut sim = Simulation::<AodvNode>::new(
                static_params(3, seed, false),
                &AodvConfig::default(),
                Mobility::fixed(&pts, strip()),
                vec![flow],
                TraceWriter::discard(),
            );
            sim.run_until(SimTime::from_secs(3));
            // The destination answers the request instead of relaying it, so
            // routes back to the requester avoid it.
            let back = bfs_hops_from(&coords(&pts), LinkModel::default().range, s, &[d]);
            for (i, r) in sim.routers().iter().enumerate() {
                for (dst, e) in r.table() {
                    if !e.valid {
                        continue;
                    }
                    aodv_checked += 1;
                    let want = if dst.index() == s { back[i] } else { hops[i][dst.index()] };
                    if want != Some(e.hop_count) {
                        aodv_bad.push(format!("n{n} {i}->{dst}: {} vs {want:?}", e.hop_count));
                    }
                }
            }
            for &(_, _, h) in &sim.stats().deliveries {
                aodv_checked += 1;
                if hops[s][d] != Some(h) {
                    aodv_bad.push(format!("n{n} delivery {s}->{d}: {h} vs {:?}", hops[s][d]));
                }
            }
            if sim.stats().delivered == 0 {
                aodv_bad.push(format!("n{n} {s}->{d}: nothing delivered"));
            }
        }
    }
    let pass = dsdv_bad.is_empty() && aodv_bad.is_empty() && dsdv_checked > 0 && aodv_checked > 0;
    let mut detail = format!(
        "DSDV {}/{} table entries match BFS, AODV {}/{} routes and deliveries match BFS",
        dsdv_checked - dsdv_bad.len().min(dsdv_checked),
        dsdv_checked,
        aodv_checked - aodv_bad.len().min(aodv_checked),
        aodv_checked
    );
    for b in dsdv_bad.iter().take(3).chain(aodv_bad.iter().take(3)) {
        detail.push_str("; ");
        detail.push_str(b);
    }
    Check::new(pass, detail)
}

/// Randomized trace text exercising merged faults, censoring, equal
/// timestamps and records that must be ignored.
pub fn random_trace(seed: u64) -> String {
    let mut rng = RngStream::new(seed, StreamLabel::Traffic);
    let mut out = String::from("# synthetic\n");
    let mut t: u64 = 0;
    let flows = 1 + rng.below(4) as u32;
    let dsts: Vec<u32> = (0..flows).map(|f| 10 + f).collect();
    let lines = 20 + rng.below(200);
    for i in 0..lines {
        if rng.below(3) > 0 {
            t += rng.below(2_000_000);
        }
        let ts = format!("{}.{:06}", t / 1_000_000, t % 1_000_000);
        let f = rng.below(flows as u64) as u32;
        let dst = dsts[f as usize];
        let line = match rng.below(9) {
            0..=2 => format!("r {ts} {dst} AGT CBR {f} {i} 1 {dst} -"),
            3 => format!("d {ts} 4 RTR CBR {f} {i} 1 {dst} LLF"),
            4 => format!("d {ts} 5 RTR CBR {f} {i} 1 {dst} NRTE"),
            5 => format!("d {ts} 5 RTR CBR {f} {i} 1 {dst} TTL"),
            6 => format!("r {ts} 3 RTR CBR {f} {i} 1 {dst} -"),
            7 => format!("s {ts} 1 AGT CBR {f} {i} 1 {dst} -"),
            _ => format!("s {ts} 2 RTR AODV - - 2 -1 -"),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Streaming analysis and the quadratic reference agree exactly on `trace`.
pub fn analyzers_agree(trace: &str) -> Result<usize, String> {
    let fast = convergence_events(trace.as_bytes(), ParseMode::Strict).map_err(|e| e.to_string())?;
    let slow = reanalyze(trace);
    let fast_samples: Vec<(u32, u64, u64)> = fast
        .samples
        .iter()
        .map(|s| (s.flow.0, s.fault_at.as_micros(), s.restored_at.as_micros()))
        .collect();
    let slow_samples: Vec<(u32, u64, u64)> = slow.samples.iter().map(|s| (s.flow, s.fault_us, s.restored_us)).collect();
    if fast_samples != slow_samples || fast.censored != slow.censored {
        return Err(format!(
            "streaming {:?} censored {} vs reference {:?} censored {}",
            fast_samples, fast.censored, slow_samples, slow.censored
        ));
    }
    Ok(fast_samples.len())
}

pub fn check_analyzer_equivalence(cases: u64) -> Check {
    let mut samples = 0;
    for seed in 0..cases {
        match analyzers_agree(&random_trace(seed)) {
            Ok(n) => samples += n,
            Err(e) => return Check::new(false, format!("trace {seed}: {e}")),
        }
    }
    Check::new(true, format!("{cases} traces, {samples} samples identical"))
}

/// Containment, speed bounds and interpolation over at least `target` legs.
pub fn check_mobility(target: usize) -> Check {
    let params = WaypointParams {
        pause_time: SimTime::from_secs(2),
        ..WaypointParams::default()
    };
    let a = arena();
    let mut rng = RngStream::new(77, StreamLabel::Mobility);
    let mut mob = Mobility::new(50, a, params, &mut rng).unwrap();
    let mut problems = Vec::new();
    while mob.legs().len() < target {
        let (idx, st) = mob
            .states()
            .iter()
            .enumerate()
            .min_by_key(|(_, s)| s.phase_end)
            .map(|(i, s)| (i, *s))
            .unwrap();
        let node = NodeId(idx as u32);
        let now = st.phase_end;
        // Probe positions inside the phase before leaving it.
        for k in 0..=4u64 {
            let t = SimTime::from_micros(st.phase_start.as_micros() + (now - st.phase_start).as_micros() * k / 4);
            let p = mob.position(node, t);
            if !a.contains(p) {
                problems.push(format!("{node} outside at {t}: {p}"));
            }
        }
        mob.advance(node, now, &mut rng).unwrap();
    }
    let mut checked = 0;
    for leg in mob.legs() {
        checked += 1;
        if !(a.contains(leg.from) && a.contains(leg.to)) {
            problems.push(format!("leg endpoints outside: {leg}"));
        }
        if !(leg.speed >= params.min_speed && leg.speed <= params.max_speed) {
            problems.push(format!("speed {} out of bounds", leg.speed));
        }
    }

    // Static limit: pause equal to the run length never moves anyone.
    let mut static_moves = 0;
    for seed in 0..5 {
        let cfg = ScenarioConfig {
            n_nodes: 20,
            pause_time: SimTime::from_secs(60),
            duration: SimTime::from_secs(60),
            seed,
            ..ScenarioConfig::default()
        };
        let (_, out) = run_detailed(&cfg, TraceWriter::discard()).unwrap();
        static_moves += out.legs.len();
    }
    let pass = problems.is_empty() && static_moves == 0 && checked >= target;
    let mut detail = format!("{checked} legs checked, {} violations, {static_moves} legs in static runs", problems.len());
    if let Some(p) = problems.first() {
        detail.push_str("; first: ");
        detail.push_str(p);
    }
    Check::new(pass, detail)
}

/// Runs `cfg` twice with trace capture and compares bytes and results.
pub fn run_twice(cfg: &ScenarioConfig) -> Result<(RunResult, usize), String> {
    let a = SharedBuf::default();
    let b = SharedBuf::default();
    let (ra, _) = run_detailed(cfg, a.writer()).map_err(|e| e.to_string())?;
    let (rb, _) = run_detailed(cfg, b.writer()).map_err(|e| e.to_string())?;
    let (ta, tb) = (a.bytes(), b.bytes());
    if ta != tb {
        return Err(format!("{}: traces differ ({} vs {} bytes)", cfg.summary(), ta.len(), tb.len()));
    }
    if ra != rb {
        return Err(format!("{}: results differ", cfg.summary()));
    }
    Ok((ra, ta.len()))
}

pub fn random_configs(count: usize, seed: u64) -> Vec<ScenarioConfig> {
    let mut rng = RngStream::new(seed, StreamLabel::Traffic);
    (0..count)
        .map(|i| {
            let protocol = [Protocol::Aodv, Protocol::Dsdv, Protocol::Tora][i % 3];
            ScenarioConfig {
                protocol,
                n_nodes: 10 + rng.below(31) as usize,
                pause_time: SimTime::from_secs(20 * rng.below(4)),
                duration: SimTime::from_secs(60),
                seed: rng.next_u64(),
                ..ScenarioConfig::default()
            }
        })
        .collect()
}

pub fn check_determinism(count: usize) -> Check {
    let mut bytes = 0;
    for cfg in random_configs(count, 2024) {
        match run_twice(&cfg) {
            Ok((_, b)) => bytes += b,
            Err(e) => return Check::new(false, e),
        }
    }
    Check::new(bytes > 0, format!("{count} configs reproduced byte-for-byte ({bytes} trace bytes each pass)"))
}

/// Number of `d` records with `reason` in a trace.
pub fn count_drops(trace: &[u8], reason: DropReason) -> usize {
    String::from_utf8_lossy(trace)
        .lines()
        .filter(|l| l.starts_with("d ") && l.ends_with(reason.as_str()))
        .count()
}
