mod common;

use common::{single_flow, static_params, tora_cycles};
use manet_core::kernel::SimTime;
use manet_core::metering::TraceWriter;
use manet_core::mobility::{Arena, Mobility, Point};
use manet_core::sim::Simulation;
use manet_core::tora::{Reaction, ToraConfig, ToraHeight, ToraNode};
use manet_core::NodeId;

const A: NodeId = NodeId(0);
const B: NodeId = NodeId(1);
const C: NodeId = NodeId(2);
const D: NodeId = NodeId(3);

fn area() -> Arena {
    Arena {
        width: 1500.0,
        height: 300.0,
    }
}

fn sim(points: &[(f64, f64)], src: NodeId, dst: NodeId, secs: u64) -> Simulation<ToraNode> {
    let pts: Vec<Point> = points.iter().map(|&(x, y)| Point { x, y }).collect();
    Simulation::new(
        static_params(secs, 7, true),
        &ToraConfig::default(),
        Mobility::fixed(&pts, area()),
        vec![single_flow(src, dst, SimTime::from_secs(1), SimTime::from_secs(secs))],
        TraceWriter::discard(),
    )
}

#[test]
fn neighbor_of_destination_sits_one_above_it() {
    let mut s = sim(&[(0.0, 150.0), (100.0, 150.0)], A, B, 3);
    s.run_until(SimTime::from_secs(3));
    let h = s.router(A).height(B).expect("route created");
    assert_eq!(
        h,
        ToraHeight {
            tau: SimTime::ZERO,
            oid: NodeId(0),
            r: 0,
            delta: 1,
            id: A,
        }
    );
    assert_eq!(s.stats().delivered, s.stats().injected);
}

#[test]
fn losing_the_destination_is_detected_as_a_partition() {
    let mut s = sim(&[(0.0, 150.0), (200.0, 150.0), (400.0, 150.0)], A, C, 10);
    s.run_until(SimTime::from_secs(5));
    assert_eq!(s.router(A).height(C).map(|h| h.delta), Some(2));
    assert!(s.stats().delivered > 0);

    s.teleport(C, Point { x: 1400.0, y: 150.0 });
    s.run_until(SimTime::from_secs(8));
    assert_eq!(s.router(B).reactions(), &[Reaction::Generate, Reaction::DetectPartition]);
    assert_eq!(s.router(A).reactions(), &[Reaction::Reflect]);
    assert_eq!(s.router(B).stats().partitions_detected, 1);
    assert_eq!(s.router(A).height(C), None);
    assert_eq!(s.router(B).height(C), None);
}

#[test]
fn diamond_reroutes_through_the_surviving_side() {
    let mut s = sim(&[(0.0, 150.0), (200.0, 290.0), (200.0, 10.0), (400.0, 150.0)], A, D, 12);
    s.run_until(SimTime::from_secs(5));
    assert_eq!(tora_cycles(s.routers()), 0);
    let before = s.stats().delivered;

    s.teleport(B, Point { x: 100.0, y: 290.0 });
    s.run_until(SimTime::from_secs(12));
    assert_eq!(tora_cycles(s.routers()), 0);
    assert_eq!(s.router(A).height(D).map(|h| h.delta), Some(2));
    assert_eq!(s.router(C).height(D).map(|h| h.delta), Some(1));
    assert!(s.router(B).height(D) > s.router(A).height(D));
    assert_eq!(s.router(A).stats().partitions_detected + s.router(B).stats().partitions_detected, 0);
    assert!(s.stats().delivered > before + 50, "{} -> {}", before, s.stats().delivered);
    assert!(s.stats().loop_drops.is_empty());
}
