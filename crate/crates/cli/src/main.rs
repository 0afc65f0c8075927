use clap::{Args, Parser, Subcommand, ValueEnum};
use manet_core::metering::{convergence_events, AnalysisError, ParseMode};
use manet_core::runner::{self, MatrixSpec};
use manet_core::sim::SimError;
use manet_core::{Protocol, ScenarioConfig, SimTime};
use serde_json::json;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_ANALYSIS: u8 = 3;

#[derive(Parser)]
#[command(name = "manetsim", version, about = "MANET routing convergence simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run(RunArgs),
    /// Run a protocol x nodes x pause x seed campaign.
    Matrix(MatrixArgs),
    /// Measure convergence times in an existing trace.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct Knobs {
    /// Simulated seconds.
    #[arg(long, default_value_t = 180.0)]
    duration: f64,
    #[arg(long, default_value_t = 500.0)]
    arena_width: f64,
    #[arg(long, default_value_t = 500.0)]
    arena_height: f64,
    /// Radio range in meters.
    #[arg(long, default_value_t = 250.0)]
    range: f64,
    #[arg(long, default_value_t = 0.1)]
    min_speed: f64,
    #[arg(long, default_value_t = 20.0)]
    max_speed: f64,
    /// Number of CBR flows (default: min(10, nodes/2)).
    #[arg(long)]
    flows: Option<usize>,
    /// Packets per second per flow.
    #[arg(long, default_value_t = 10.0)]
    rate: f64,
    #[arg(long, default_value_t = 512)]
    packet_size: u32,
    /// Unicast attempts before a link failure is declared.
    #[arg(long, default_value_t = 3)]
    retry_count: u32,
    #[arg(long, default_value_t = 30.0)]
    retry_gap_ms: f64,
    #[arg(long, default_value_t = 2.0)]
    base_latency_ms: f64,
    #[arg(long, default_value_t = 1.0)]
    jitter_ms: f64,
    /// Optional link rate; adds size / rate to every frame's latency.
    #[arg(long)]
    bytes_per_sec: Option<f64>,
    #[arg(long, default_value_t = 15.0)]
    dsdv_interval: f64,
    #[arg(long, default_value_t = 0.5)]
    dsdv_trigger_delay: f64,
    #[arg(long, default_value_t = 10.0)]
    aodv_route_lifetime: f64,
    #[arg(long, default_value_t = 2)]
    aodv_rreq_retries: u32,
    #[arg(long, default_value_t = 10.0)]
    aodv_collect_ms: f64,
    #[arg(long, default_value_t = 1.0)]
    tora_qry_wait: f64,
    #[arg(long, default_value_t = 100.0)]
    sense_interval_ms: f64,
    /// Also detect link breaks by periodic neighbor sensing.
    #[arg(long)]
    hello_detection: bool,
    /// Track visited nodes per packet and drop revisits.
    #[arg(long)]
    audit_loops: bool,
}

impl Knobs {
    fn apply(&self, cfg: &mut ScenarioConfig) {
        let ms = |v: f64| SimTime::from_secs_f64(v / 1000.0);
        cfg.duration = SimTime::from_secs_f64(self.duration);
        cfg.arena.width = self.arena_width;
        cfg.arena.height = self.arena_height;
        cfg.link.range = self.range;
        cfg.min_speed = self.min_speed;
        cfg.max_speed = self.max_speed;
        cfg.traffic.flows = self.flows;
        cfg.traffic.rate = self.rate;
        cfg.traffic.packet_size = self.packet_size;
        cfg.link.retry_count = self.retry_count;
        cfg.link.retry_gap = ms(self.retry_gap_ms);
        cfg.link.base_latency = ms(self.base_latency_ms);
        cfg.link.jitter_max = ms(self.jitter_ms);
        cfg.link.bytes_per_sec = self.bytes_per_sec;
        cfg.dsdv.full_dump_interval = SimTime::from_secs_f64(self.dsdv_interval);
        cfg.dsdv.triggered_update_delay = SimTime::from_secs_f64(self.dsdv_trigger_delay);
        cfg.aodv.route_lifetime = SimTime::from_secs_f64(self.aodv_route_lifetime);
        cfg.aodv.rreq_retries = self.aodv_rreq_retries;
        cfg.aodv.rreq_collect_window = ms(self.aodv_collect_ms);
        cfg.tora.qry_wait = SimTime::from_secs_f64(self.tora_qry_wait);
        cfg.sense_interval = ms(self.sense_interval_ms);
        cfg.hello_detection = self.hello_detection;
        cfg.audit_loops = self.audit_loops;
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Dsdv,
    Aodv,
    Tora,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Dsdv => Protocol::Dsdv,
            ProtocolArg::Aodv => Protocol::Aodv,
            ProtocolArg::Tora => Protocol::Tora,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, ignore_case = true)]
    protocol: ProtocolArg,
    #[arg(long)]
    nodes: usize,
    /// Pause time in seconds.
    #[arg(long)]
    pause: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_trace: Option<PathBuf>,
    /// JSON result file; printed to stdout when absent.
    #[arg(long)]
    out_result: Option<PathBuf>,
    /// Movement legs file.
    #[arg(long)]
    out_mobility: Option<PathBuf>,
    #[command(flatten)]
    knobs: Knobs,
}

#[derive(Args)]
struct MatrixArgs {
    #[arg(long, value_enum, value_delimiter = ',', ignore_case = true, default_value = "aodv,dsdv")]
    protocols: Vec<ProtocolArg>,
    /// Also run TORA.
    #[arg(long)]
    with_tora: bool,
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60,70,80,90,100")]
    nodes_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,20,40,60,80,100,120,140,160,180")]
    pauses_list: Vec<u64>,
    /// Number of seeds per cell.
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long, default_value_t = 1)]
    base_seed: u64,
    /// Parallel runs (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Print the number of planned runs and exit.
    #[arg(long)]
    dry_run: bool,
    #[command(flatten)]
    knobs: Knobs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Skip malformed lines instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Io(String),
    Analysis(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Io(_) => EXIT_IO,
            Failure::Analysis(_) => EXIT_ANALYSIS,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Analysis(m) => m,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Config(c.to_string()),
            SimError::Io(e) => Failure::Io(e.to_string()),
        }
    }
}

fn output(path: Option<&PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    if !(args.pause.is_finite() && args.pause >= 0.0) {
        return Err(Failure::Config(format!("pause must be a non-negative number, got {}", args.pause)));
    }
    let mut cfg = ScenarioConfig::new(args.protocol.into(), args.nodes, 0, args.seed);
    cfg.pause_time = SimTime::from_secs_f64(args.pause);
    args.knobs.apply(&mut cfg);
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let writer = match &args.out_trace {
        Some(p) => manet_core::metering::TraceWriter::new(Box::new(BufWriter::new(File::create(p)?))),
        None => manet_core::metering::TraceWriter::discard(),
    };
    let (result, outcome) = runner::run_detailed(&cfg, writer)?;
    if let Some(p) = &args.out_mobility {
        runner::write_mobility(&outcome.legs, BufWriter::new(File::create(p)?))?;
    }
    let mut out = output(args.out_result.as_ref())?;
    serde_json::to_writer_pretty(&mut out, &result).map_err(|e| Failure::Io(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn cmd_matrix(args: MatrixArgs) -> Result<(), Failure> {
    let mut protocols: Vec<Protocol> = args.protocols.iter().map(|&p| p.into()).collect();
    if args.with_tora {
        protocols.push(Protocol::Tora);
    }
    protocols.sort();
    protocols.dedup();
    if protocols.is_empty() || args.nodes_list.is_empty() || args.pauses_list.is_empty() || args.seeds == 0 {
        return Err(Failure::Config("every matrix axis needs at least one value".into()));
    }
    let mut base = ScenarioConfig::default();
    args.knobs.apply(&mut base);
    let spec = MatrixSpec {
        protocols,
        node_counts: args.nodes_list,
        pause_times: args.pauses_list,
        seeds: runner::default_seeds(args.base_seed, args.seeds),
        base,
    };
    let plan = spec.plan();
    for cfg in &plan {
        cfg.validate().map_err(|e| Failure::Config(format!("{}: {e}", cfg.summary())))?;
    }
    if args.dry_run {
        println!("{} runs planned", plan.len());
        return Ok(());
    }
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let rows = runner::run_matrix(&plan, workers);

    fs::create_dir_all(&args.out_dir)?;
    let ok: Vec<_> = rows.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    let csv_path = args.out_dir.join("results.csv");
    runner::write_results_csv(ok.iter().copied(), BufWriter::new(File::create(&csv_path)?))
        .map_err(|e| Failure::Io(e.to_string()))?;
    let failures: Vec<_> = rows
        .iter()
        .filter_map(|r| r.result.as_ref().err().map(|e| (r, e)))
        .collect();
    if !failures.is_empty() {
        let mut f = BufWriter::new(File::create(args.out_dir.join("failures.txt"))?);
        for (row, err) in &failures {
            writeln!(f, "{}: {err}", row.config.summary())?;
        }
        f.flush()?;
    }
    let plots = runner::emit_plotdata(&rows, &args.out_dir.join("plots"))?;
    println!(
        "{} rows written to {} ({} failed), {} plot files",
        ok.len(),
        csv_path.display(),
        failures.len(),
        plots.len()
    );
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let mode = if args.lenient { ParseMode::Lenient } else { ParseMode::Strict };
    let file = File::open(&args.trace)?;
    let report = convergence_events(BufReader::new(file), mode).map_err(|e| match e {
        AnalysisError::Io(e) => Failure::Io(e.to_string()),
        other => Failure::Analysis(other.to_string()),
    })?;
    for (line, why) in &report.skipped {
        eprintln!("skipped line {line}: {why}");
    }
    let mean = report.mean();
    let mut out = output(args.out.as_ref())?;
    match args.format {
        Format::Csv => {
            writeln!(out, "flow,fault_at,restored_at,duration")?;
            for s in &report.samples {
                writeln!(out, "{},{},{},{}", s.flow, s.fault_at, s.restored_at, s.duration())?;
            }
            writeln!(
                out,
                "# mean_ct={} samples={} censored={}",
                runner::format_ct(mean),
                report.samples.len(),
                report.censored
            )?;
        }
        Format::Jsonl => {
            for s in &report.samples {
                let v = json!({
                    "flow": s.flow.0,
                    "fault_at": s.fault_at.as_secs_f64(),
                    "restored_at": s.restored_at.as_secs_f64(),
                    "duration": s.duration().as_secs_f64(),
                });
                writeln!(out, "{v}")?;
            }
            let summary = json!({
                "mean_ct": mean,
                "samples": report.samples.len(),
                "censored": report.censored,
            });
            writeln!(out, "{summary}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Matrix(a) => cmd_matrix(a),
        Command::Analyze(a) => cmd_analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
