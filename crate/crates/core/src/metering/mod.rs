//! Trace emission and convergence-time analysis.
//!
//! A fault opens for a flow at its first `LLF` or `NRTE` data drop after the
//! flow has delivered at least once, and closes at the next delivery at the
//! flow's destination. Further qualifying drops while a fault is open are
//! absorbed into it; faults still open when the trace ends are censored.

mod convergence;
mod trace;

pub use convergence::{
    convergence_events, scenario_convergence_time, AnalysisError, ConvergenceAnalyzer, ConvergenceReport,
    ConvergenceSample, ParseMode,
};
pub use trace::{Layer, PacketKind, RecordError, TraceAction, TraceRecord, TraceWriter};
