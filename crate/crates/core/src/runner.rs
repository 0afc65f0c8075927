//! Single runs, scenario matrices and result files.

use crate::aodv::AodvNode;
use crate::config::{Protocol, ScenarioConfig};
use crate::dsdv::DsdvNode;
use crate::kernel::SimTime;
use crate::metering::TraceWriter;
use crate::mobility::Leg;
use crate::sim::{SimError, SimOutcome, Simulation};
use crate::tora::ToraNode;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Summary of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub protocol: Protocol,
    pub n_nodes: usize,
    pub pause_time: f64,
    pub seed: u64,
    /// Mean convergence time in seconds; `None` when no fault occurred.
    pub mean_ct: Option<f64>,
    pub samples: usize,
    pub censored: usize,
    pub delivery_ratio: f64,
    pub control_packets: u64,
}

impl RunResult {
    fn new(cfg: &ScenarioConfig, out: &SimOutcome) -> Self {
        RunResult {
            protocol: cfg.protocol,
            n_nodes: cfg.n_nodes,
            pause_time: cfg.pause_time.as_secs_f64(),
            seed: cfg.seed,
            mean_ct: out.report.mean(),
            samples: out.report.samples.len(),
            censored: out.report.censored,
            delivery_ratio: out.stats.delivery_ratio(),
            control_packets: out.stats.control_packets,
        }
    }
}

/// Runs `cfg` with the given trace sink and returns the full outcome.
pub fn simulate(cfg: &ScenarioConfig, writer: TraceWriter) -> Result<SimOutcome, SimError> {
    match cfg.protocol {
        Protocol::Dsdv => Simulation::<DsdvNode>::from_scenario(cfg, &cfg.dsdv, writer)?.run(),
        Protocol::Aodv => Simulation::<AodvNode>::from_scenario(cfg, &cfg.aodv, writer)?.run(),
        Protocol::Tora => Simulation::<ToraNode>::from_scenario(cfg, &cfg.tora, writer)?.run(),
    }
}

/// Runs `cfg`, writing the trace to `trace` when given.
pub fn run_one(cfg: &ScenarioConfig, trace: Option<&Path>) -> Result<RunResult, SimError> {
    let writer = match trace {
        Some(path) => TraceWriter::new(Box::new(BufWriter::new(File::create(path)?))),
        None => TraceWriter::discard(),
    };
    let out = simulate(cfg, writer)?;
    Ok(RunResult::new(cfg, &out))
}

/// Like [`run_one`] but also returns the outcome (samples, legs, stats).
pub fn run_detailed(cfg: &ScenarioConfig, writer: TraceWriter) -> Result<(RunResult, SimOutcome), SimError> {
    let out = simulate(cfg, writer)?;
    Ok((RunResult::new(cfg, &out), out))
}

/// Writes movement legs, one per line: `node start from_x from_y to_x to_y speed`.
pub fn write_mobility<W: Write>(legs: &[Leg], mut out: W) -> io::Result<()> {
    writeln!(out, "# node start from_x from_y to_x to_y speed")?;
    for leg in legs {
        writeln!(out, "{leg}")?;
    }
    out.flush()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSpec {
    pub protocols: Vec<Protocol>,
    pub node_counts: Vec<usize>,
    pub pause_times: Vec<u64>,
    pub seeds: Vec<u64>,
    /// Every other knob is taken from here.
    pub base: ScenarioConfig,
}

impl MatrixSpec {
    /// 10 densities by 10 pause times by 3 seeds.
    pub fn standard(protocols: Vec<Protocol>, base_seed: u64) -> Self {
        MatrixSpec {
            protocols,
            node_counts: (1..=10).map(|i| i * 10).collect(),
            pause_times: (0..10).map(|i| i * 20).collect(),
            seeds: default_seeds(base_seed, 3),
            base: ScenarioConfig::default(),
        }
    }

    pub fn plan(&self) -> Vec<ScenarioConfig> {
        let mut plan = Vec::new();
        for &protocol in &self.protocols {
            for &n in &self.node_counts {
                for &pause in &self.pause_times {
                    for &seed in &self.seeds {
                        plan.push(ScenarioConfig {
                            protocol,
                            n_nodes: n,
                            pause_time: SimTime::from_secs(pause),
                            seed,
                            ..self.base.clone()
                        });
                    }
                }
            }
        }
        plan
    }
}

pub fn default_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

/// One matrix cell and its outcome; failures carry the error text.
#[derive(Clone, Debug)]
pub struct MatrixRow {
    pub config: ScenarioConfig,
    pub result: Result<RunResult, String>,
}

/// Runs every configuration on up to `workers` threads. Rows come back in
/// plan order regardless of scheduling.
pub fn run_matrix(plan: &[ScenarioConfig], workers: usize) -> Vec<MatrixRow> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        plan.par_iter()
            .map(|cfg| MatrixRow {
                config: cfg.clone(),
                result: run_one(cfg, None).map_err(|e| e.to_string()),
            })
            .collect()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub protocol: Protocol,
    pub n_nodes: usize,
    pub pause_micros: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellSummary {
    /// Mean over the seeds that saw at least one fault.
    pub mean_ct: Option<f64>,
    pub runs: usize,
    pub faulted_runs: usize,
    pub failures: usize,
}

/// Averages `mean_ct` over seeds within each (protocol, nodes, pause) cell.
pub fn cell_means<'a>(results: impl IntoIterator<Item = &'a Result<RunResult, String>>, keys: impl IntoIterator<Item = CellKey>) -> BTreeMap<CellKey, CellSummary> {
    let mut sums: BTreeMap<CellKey, (f64, CellSummary)> = BTreeMap::new();
    for (res, key) in results.into_iter().zip(keys) {
        let (sum, cell) = sums.entry(key).or_default();
        match res {
            Ok(r) => {
                cell.runs += 1;
                if let Some(ct) = r.mean_ct {
                    *sum += ct;
                    cell.faulted_runs += 1;
                }
            }
            Err(_) => cell.failures += 1,
        }
    }
    sums.into_iter()
        .map(|(k, (sum, mut cell))| {
            cell.mean_ct = (cell.faulted_runs > 0).then(|| sum / cell.faulted_runs as f64);
            (k, cell)
        })
        .collect()
}

pub fn summarize(rows: &[MatrixRow]) -> BTreeMap<CellKey, CellSummary> {
    cell_means(
        rows.iter().map(|r| &r.result),
        rows.iter().map(|r| CellKey {
            protocol: r.config.protocol,
            n_nodes: r.config.n_nodes,
            pause_micros: r.config.pause_time.as_micros(),
        }),
    )
}

pub fn format_ct(ct: Option<f64>) -> String {
    match ct {
        Some(v) => format!("{v:.6}"),
        None => "NA".to_string(),
    }
}

pub const CSV_HEADER: [&str; 9] = [
    "protocol",
    "n_nodes",
    "pause_time",
    "seed",
    "mean_ct",
    "samples",
    "censored",
    "delivery_ratio",
    "control_packets",
];

/// Writes successful runs as CSV; failed runs are skipped.
pub fn write_results_csv<'a, W: Write>(results: impl IntoIterator<Item = &'a RunResult>, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in results {
        w.write_record([
            r.protocol.to_string(),
            r.n_nodes.to_string(),
            r.pause_time.to_string(),
            r.seed.to_string(),
            format_ct(r.mean_ct),
            r.samples.to_string(),
            r.censored.to_string(),
            format!("{:.6}", r.delivery_ratio),
            r.control_packets.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one plot-data file per node count into `dir`: a row per pause
/// time with one mean convergence time column per protocol (`NA` when the
/// cell saw no faults). Returns the written paths.
pub fn emit_plotdata(rows: &[MatrixRow], dir: &Path) -> io::Result<Vec<PathBuf>> {
    let cells = summarize(rows);
    let mut protocols: Vec<Protocol> = rows.iter().map(|r| r.config.protocol).collect();
    protocols.sort();
    protocols.dedup();
    let mut grid: BTreeMap<usize, BTreeMap<u64, BTreeMap<Protocol, Option<f64>>>> = BTreeMap::new();
    for (key, cell) in &cells {
        grid.entry(key.n_nodes)
            .or_default()
            .entry(key.pause_micros)
            .or_default()
            .insert(key.protocol, cell.mean_ct);
    }
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (n, by_pause) in grid {
        let path = dir.join(format!("ct_n{n:03}.dat"));
        let mut out = BufWriter::new(File::create(&path)?);
        let names: Vec<&str> = protocols.iter().map(|p| p.as_str()).collect();
        writeln!(out, "# nodes={n}")?;
        writeln!(out, "# pause {}", names.join(" "))?;
        for (pause, by_proto) in by_pause {
            let mut line = SimTime::from_micros(pause).as_secs_f64().to_string();
            for p in &protocols {
                line.push(' ');
                line.push_str(&format_ct(by_proto.get(p).copied().flatten()));
            }
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        paths.push(path);
    }
    Ok(paths)
}
