//! Brute-force reference implementations for checking the simulator.
//!
//! Nothing here depends on `manet-core`: inputs are plain coordinates, edge
//! lists and trace text, and every algorithm is the simplest one that works.

use std::collections::VecDeque;

/// `true` where two distinct nodes lie within `range` of each other.
pub fn range_matrix(positions: &[(f64, f64)], range: f64) -> Vec<Vec<bool>> {
    let n = positions.len();
    let mut m = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dx = positions[i].0 - positions[j].0;
                let dy = positions[i].1 - positions[j].1;
                m[i][j] = dx * dx + dy * dy <= range * range;
            }
        }
    }
    m
}

/// All-pairs minimal hop counts on the unit-disk graph; `None` when
/// unreachable.
pub fn bfs_shortest_paths(positions: &[(f64, f64)], range: f64) -> Vec<Vec<Option<u32>>> {
    let adj = range_matrix(positions, range);
    let n = positions.len();
    (0..n)
        .map(|src| {
            let mut dist = vec![None; n];
            dist[src] = Some(0);
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                let du = dist[u].expect("queued nodes have a distance");
                for v in 0..n {
                    if adj[u][v] && dist[v].is_none() {
                        dist[v] = Some(du + 1);
                        queue.push_back(v);
                    }
                }
            }
            dist
        })
        .collect()
}

/// Minimal hop counts from `src` when the nodes in `no_relay` may end a path
/// but never forward along one.
pub fn bfs_hops_from(positions: &[(f64, f64)], range: f64, src: usize, no_relay: &[usize]) -> Vec<Option<u32>> {
    let adj = range_matrix(positions, range);
    let n = positions.len();
    let mut dist = vec![None; n];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        if u != src && no_relay.contains(&u) {
            continue;
        }
        let du = dist[u].expect("queued nodes have a distance");
        for v in 0..n {
            if adj[u][v] && dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Directed cycles in a graph of `n` nodes, one per back edge found by
/// depth-first search. Empty exactly when the graph is acyclic.
pub fn detect_cycles(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        OnStack,
        Done,
    }
    fn visit(u: usize, edges: &[(usize, usize)], mark: &mut [Mark], stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        mark[u] = Mark::OnStack;
        stack.push(u);
        for &(a, b) in edges {
            if a != u {
                continue;
            }
            match mark[b] {
                Mark::New => visit(b, edges, mark, stack, out),
                Mark::OnStack => {
                    let start = stack.iter().position(|&x| x == b).expect("on stack");
                    out.push(stack[start..].to_vec());
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        mark[u] = Mark::Done;
    }
    let mut mark = vec![Mark::New; n];
    let mut out = Vec::new();
    for u in 0..n {
        if mark[u] == Mark::New {
            visit(u, edges, &mut mark, &mut Vec::new(), &mut out);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReferenceSample {
    pub flow: u32,
    pub fault_us: u64,
    pub restored_us: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReferenceReport {
    /// Ordered by restoration.
    pub samples: Vec<ReferenceSample>,
    pub censored: usize,
}

struct Line {
    time_us: u64,
    flow: u32,
    fault: bool,
    delivery: bool,
}

fn parse_time(s: &str) -> Option<u64> {
    let (whole, frac) = s.split_once('.')?;
    if frac.len() != 6 {
        return None;
    }
    Some(whole.parse::<u64>().ok()? * 1_000_000 + frac.parse::<u64>().ok()?)
}

fn classify(line: &str) -> Option<Line> {
    let f: Vec<&str> = line.split(' ').collect();
    if f.len() != 10 {
        return None;
    }
    let flow = f[5].parse::<u32>().ok()?;
    let fault = f[0] == "d" && f[4] == "CBR" && (f[9] == "LLF" || f[9] == "NRTE");
    let delivery = f[0] == "r" && f[3] == "AGT" && f[4] == "CBR" && f[2] == f[8];
    Some(Line {
        time_us: parse_time(f[1])?,
        flow,
        fault,
        delivery,
    })
}

/// Recomputes fault/restoration pairs by rescanning the trace once per
/// event. Lines that are comments or lack a flow are ignored.
pub fn reanalyze(trace: &str) -> ReferenceReport {
    let lines: Vec<Line> = trace
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(classify)
        .collect();
    let mut flows: Vec<u32> = lines.iter().map(|l| l.flow).collect();
    flows.sort_unstable();
    flows.dedup();

    let mut found: Vec<(usize, ReferenceSample)> = Vec::new();
    let mut censored = 0;
    for flow in flows {
        let first_delivery = lines.iter().position(|l| l.flow == flow && l.delivery);
        let Some(mut cursor) = first_delivery else { continue };
        loop {
            let Some(f) = (cursor + 1..lines.len()).find(|&i| lines[i].flow == flow && lines[i].fault) else {
                break;
            };
            let fault_us = lines[f].time_us;
            let restore = (f + 1..lines.len()).find(|&i| lines[i].flow == flow && lines[i].delivery && lines[i].time_us > fault_us);
            match restore {
                Some(r) => {
                    found.push((
                        r,
                        ReferenceSample {
                            flow,
                            fault_us,
                            restored_us: lines[r].time_us,
                        },
                    ));
                    cursor = r;
                }
                None => {
                    censored += 1;
                    break;
                }
            }
        }
    }
    found.sort_by_key(|(idx, _)| *idx);
    ReferenceReport {
        samples: found.into_iter().map(|(_, s)| s).collect(),
        censored,
    }
}
