//! Acceptance report: one line per criterion, nonzero exit on any hard
//! failure. Run with `cargo test -p manet-core --test acceptance`.

mod common;

use common::Check;
use manet_core::runner::{self, CellKey, CellSummary, MatrixRow, MatrixSpec};
use manet_core::{Protocol, ScenarioConfig, SimTime};
use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

const SEEDS: usize = 3;
const BASE_SEED: u64 = 1;
const AODV_SOFT_LIMIT_S: f64 = 2.0;
const DSDV_SOFT_FLOOR_S: f64 = 5.0;
const DETERMINISM_CONFIGS: usize = 6;
const ANALYZER_TRACES: u64 = 100;
const MOBILITY_LEGS: usize = 10_000;
const DESK_BUDGET: Duration = Duration::from_secs(600);

#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    Pass,
    Warn,
    Fail,
}

struct Sweep {
    rows: Vec<MatrixRow>,
    cells: BTreeMap<CellKey, CellSummary>,
    elapsed: Duration,
}

impl Sweep {
    fn run(nodes: &[usize], pauses: &[u64]) -> Sweep {
        let spec = MatrixSpec {
            protocols: vec![Protocol::Aodv, Protocol::Dsdv],
            node_counts: nodes.to_vec(),
            pause_times: pauses.to_vec(),
            seeds: runner::default_seeds(BASE_SEED, SEEDS),
            base: ScenarioConfig::default(),
        };
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        let start = Instant::now();
        let rows = runner::run_matrix(&spec.plan(), workers);
        let elapsed = start.elapsed();
        let cells = runner::summarize(&rows);
        Sweep { rows, cells, elapsed }
    }

    fn mean(&self, protocol: Protocol, n: usize, pause: u64) -> Option<f64> {
        let key = CellKey {
            protocol,
            n_nodes: n,
            pause_micros: SimTime::from_secs(pause).as_micros(),
        };
        self.cells.get(&key).and_then(|c| c.mean_ct)
    }

    fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_err()).count()
    }

    /// Cells where `fast` has a strictly smaller mean than `slow`, and the
    /// list of all cells rendered as `n/pause: AODV vs DSDV`.
    fn ordered(&self, nodes: &[usize], pauses: &[u64], fast: Protocol, slow: Protocol) -> (usize, usize, Vec<String>) {
        let mut hits = 0;
        let mut total = 0;
        let mut shown = Vec::new();
        for &n in nodes {
            for &p in pauses {
                total += 1;
                let (f, s) = (self.mean(fast, n, p), self.mean(slow, n, p));
                if let (Some(f), Some(s)) = (f, s) {
                    if f < s {
                        hits += 1;
                    }
                }
                shown.push(format!(
                    "{n}/{p}: {fast} {} vs {slow} {}",
                    runner::format_ct(f),
                    runner::format_ct(s)
                ));
            }
        }
        (hits, total, shown)
    }
}

fn report(id: u32, verdict: Verdict, detail: &str) -> Verdict {
    let tag = match verdict {
        Verdict::Pass => "PASS",
        Verdict::Warn => "WARN",
        Verdict::Fail => "FAIL",
    };
    println!("criterion {id:>2}: {tag} {detail}");
    verdict
}

fn from_check(c: Check) -> (Verdict, String) {
    (if c.pass { Verdict::Pass } else { Verdict::Fail }, c.detail)
}

fn crossover(id: u32, nodes: &[usize], pauses: &[u64], fast: Protocol, slow: Protocol) -> (Verdict, Sweep) {
    let sweep = Sweep::run(nodes, pauses);
    let (hits, total, shown) = sweep.ordered(nodes, pauses, fast, slow);
    let ok = hits == total && sweep.failures() == 0;
    let detail = format!(
        "{fast} faster in {hits}/{total} cells ({} runs, {:.1}s): {}",
        sweep.rows.len(),
        sweep.elapsed.as_secs_f64(),
        shown.join("; ")
    );
    (report(id, if ok { Verdict::Pass } else { Verdict::Fail }, &detail), sweep)
}

fn magnitude(sparse: &Sweep) -> Verdict {
    let aodv = sparse.mean(Protocol::Aodv, 10, 0);
    let dsdv = sparse.mean(Protocol::Dsdv, 10, 0);
    let ok = aodv.is_some_and(|a| a < AODV_SOFT_LIMIT_S) && dsdv.is_some_and(|d| d > DSDV_SOFT_FLOOR_S);
    let detail = format!(
        "n=10 pause=0: AODV {} (limit {AODV_SOFT_LIMIT_S}), DSDV {} (floor {DSDV_SOFT_FLOOR_S})",
        runner::format_ct(aodv),
        runner::format_ct(dsdv)
    );
    report(3, if ok { Verdict::Pass } else { Verdict::Warn }, &detail)
}

fn matrix_scale() -> Verdict {
    let two = MatrixSpec::standard(vec![Protocol::Aodv, Protocol::Dsdv], BASE_SEED).plan();
    let three = MatrixSpec::standard(Protocol::ALL.to_vec(), BASE_SEED).plan();
    let ok = two.len() == 600 && three.len() == 900;
    report(
        4,
        if ok { Verdict::Pass } else { Verdict::Fail },
        &format!("{} rows for AODV+DSDV, {} with TORA", two.len(), three.len()),
    )
}

fn plot_rows(path: &PathBuf) -> usize {
    fs::read_to_string(path)
        .map(|s| s.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).count())
        .unwrap_or(0)
}

fn desk_scale() -> Verdict {
    let nodes = [10, 50, 100];
    let pauses = [0, 80, 180];
    let sweep = Sweep::run(&nodes, &pauses);
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_plots");
    let _ = fs::remove_dir_all(&dir);
    let files = runner::emit_plotdata(&sweep.rows, &dir).unwrap_or_default();
    let rows_per_file: Vec<usize> = files.iter().map(plot_rows).collect();

    let (aodv_wins, _, _) = sweep.ordered(&[10], &[0], Protocol::Aodv, Protocol::Dsdv);
    let (dsdv_wins, _, _) = sweep.ordered(&[100], &[80, 180], Protocol::Dsdv, Protocol::Aodv);
    let (_, _, shown) = sweep.ordered(&nodes, &pauses, Protocol::Aodv, Protocol::Dsdv);

    let timely = sweep.elapsed < DESK_BUDGET;
    let complete = sweep.rows.len() == 54 && sweep.failures() == 0;
    let plotted = files.len() == 3 && rows_per_file.iter().all(|&r| r == 3);
    let signs = aodv_wins == 1 && dsdv_wins > 0;
    let ok = timely && complete && plotted && signs;
    let detail = format!(
        "{} runs in {:.1}s (budget {}s), {} plot files with {:?} rows in {}; sparse/dynamic AODV faster: {}, dense/static DSDV faster in {dsdv_wins}/2 cells; {}",
        sweep.rows.len(),
        sweep.elapsed.as_secs_f64(),
        DESK_BUDGET.as_secs(),
        files.len(),
        rows_per_file,
        dir.display(),
        aodv_wins == 1,
        shown.join("; ")
    );
    report(10, if ok { Verdict::Pass } else { Verdict::Fail }, &detail)
}

fn main() {
    let mut verdicts = Vec::new();

    let (v, sparse) = crossover(1, &[10, 20, 30], &[0, 20, 40], Protocol::Aodv, Protocol::Dsdv);
    verdicts.push(v);
    let (v, _) = crossover(2, &[80, 100], &[140, 180], Protocol::Dsdv, Protocol::Aodv);
    verdicts.push(v);
    verdicts.push(magnitude(&sparse));
    verdicts.push(matrix_scale());

    let checks: [(u32, fn() -> Check); 5] = [
        (5, || common::check_determinism(DETERMINISM_CONFIGS)),
        (6, common::check_loop_freedom),
        (7, common::check_shortest_paths),
        (8, || common::check_analyzer_equivalence(ANALYZER_TRACES)),
        (9, || common::check_mobility(MOBILITY_LEGS)),
    ];
    for (id, check) in checks {
        let (v, detail) = from_check(check());
        verdicts.push(report(id, v, &detail));
    }
    verdicts.push(desk_scale());

    let failed = verdicts.iter().filter(|&&v| v == Verdict::Fail).count();
    let warned = verdicts.iter().filter(|&&v| v == Verdict::Warn).count();
    println!("acceptance: {} pass, {warned} warn, {failed} fail", verdicts.len() - failed - warned);
    if failed > 0 {
        std::process::exit(1);
    }
}
