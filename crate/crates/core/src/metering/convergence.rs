use super::trace::{Layer, PacketKind, RecordError, TraceAction, TraceRecord};
use crate::kernel::SimTime;
use crate::routing::DropReason;
use crate::FlowId;
use std::collections::BTreeMap;
use std::io::{self, BufRead};
use thiserror::Error;

/// One fault→restoration interval of one flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConvergenceSample {
    pub flow: FlowId,
    pub fault_at: SimTime,
    pub restored_at: SimTime,
}

impl ConvergenceSample {
    pub fn duration(&self) -> SimTime {
        self.restored_at - self.fault_at
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceReport {
    /// Samples in order of restoration.
    pub samples: Vec<ConvergenceSample>,
    pub censored: usize,
    /// Lines skipped in lenient mode, with their line numbers.
    pub skipped: Vec<(usize, String)>,
}

impl ConvergenceReport {
    pub fn mean(&self) -> Option<f64> {
        scenario_convergence_time(&self.samples)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("line {line}: {source}")]
    Malformed { line: usize, source: RecordError },
    #[error("line {line}: time {time} precedes the previous record")]
    Unsorted { line: usize, time: SimTime },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Default)]
struct FlowState {
    delivered: bool,
    open: Option<SimTime>,
}

/// Streaming convergence analysis over trace records in time order.
#[derive(Default)]
pub struct ConvergenceAnalyzer {
    flows: BTreeMap<FlowId, FlowState>,
    samples: Vec<ConvergenceSample>,
}

fn is_fault(rec: &TraceRecord) -> bool {
    rec.action == TraceAction::Drop
        && rec.kind == PacketKind::Cbr
        && matches!(rec.reason, Some(DropReason::Llf | DropReason::Nrte))
}

fn is_delivery(rec: &TraceRecord) -> bool {
    rec.action == TraceAction::Recv
        && rec.layer == Layer::Agt
        && rec.kind == PacketKind::Cbr
        && rec.dst == Some(rec.node)
}

impl ConvergenceAnalyzer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, rec: &TraceRecord) {
        let Some(flow) = rec.flow else { return };
        if is_fault(rec) {
            let st = self.flows.entry(flow).or_default();
            if st.delivered && st.open.is_none() {
                st.open = Some(rec.time);
            }
        } else if is_delivery(rec) {
            let st = self.flows.entry(flow).or_default();
            st.delivered = true;
            // A delivery stamped with the fault's own instant was already in
            // flight; restoration must come strictly later.
            if let Some(fault_at) = st.open {
                if rec.time > fault_at {
                    st.open = None;
                    self.samples.push(ConvergenceSample {
                        flow,
                        fault_at,
                        restored_at: rec.time,
                    });
                }
            }
        }
    }

    pub fn samples(&self) -> &[ConvergenceSample] {
        &self.samples
    }

    pub fn finish(self) -> ConvergenceReport {
        let censored = self.flows.values().filter(|f| f.open.is_some()).count();
        ConvergenceReport {
            samples: self.samples,
            censored,
            skipped: Vec::new(),
        }
    }
}

/// Analyzes a trace stream. Lines starting with `#` and blank lines are
/// ignored.
pub fn convergence_events<R: BufRead>(reader: R, mode: ParseMode) -> Result<ConvergenceReport, AnalysisError> {
    let mut analyzer = ConvergenceAnalyzer::new();
    let mut skipped = Vec::new();
    let mut last = SimTime::ZERO;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec = match line.parse::<TraceRecord>() {
            Ok(rec) => rec,
            Err(source) => match mode {
                ParseMode::Strict => return Err(AnalysisError::Malformed { line: line_no, source }),
                ParseMode::Lenient => {
                    skipped.push((line_no, source.to_string()));
                    continue;
                }
            },
        };
        if rec.time < last {
            match mode {
                ParseMode::Strict => return Err(AnalysisError::Unsorted { line: line_no, time: rec.time }),
                ParseMode::Lenient => {
                    skipped.push((line_no, format!("time {} out of order", rec.time)));
                    continue;
                }
            }
        }
        last = rec.time;
        analyzer.observe(&rec);
    }
    let mut report = analyzer.finish();
    report.skipped = skipped;
    Ok(report)
}

/// Mean sample duration in seconds; `None` when there were no faults.
pub fn scenario_convergence_time(samples: &[ConvergenceSample]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let total: u64 = samples.iter().map(|s| s.duration().as_micros()).sum();
    Some(total as f64 / samples.len() as f64 / 1e6)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analyze(text: &str) -> ConvergenceReport {
        convergence_events(text.as_bytes(), ParseMode::Strict).unwrap()
    }

    #[test]
    fn single_fault() {
        let r = analyze(
            "r 5.000000 7 AGT CBR 3 1 2 7 -\n\
             d 10.000000 4 RTR CBR 3 2 2 7 LLF\n\
             r 12.500000 7 AGT CBR 3 3 2 7 -\n",
        );
        assert_eq!(r.samples.len(), 1);
        assert_eq!(r.samples[0].duration(), SimTime::from_secs_f64(2.5));
        assert_eq!(r.censored, 0);
    }

    #[test]
    fn overlapping_drops_merge() {
        let r = analyze(
            "r 5.000000 7 AGT CBR 3 1 2 7 -\n\
             d 10.000000 4 RTR CBR 3 2 2 7 LLF\n\
             d 10.400000 2 RTR CBR 3 3 2 7 LLF\n\
             r 12.500000 7 AGT CBR 3 4 2 7 -\n",
        );
        assert_eq!(r.samples.len(), 1);
        assert_eq!(r.samples[0].fault_at, SimTime::from_secs(10));
        assert_eq!(r.mean(), Some(2.5));
    }

    #[test]
    fn open_fault_at_end_is_censored() {
        let r = analyze(
            "r 5.000000 7 AGT CBR 3 1 2 7 -\n\
             d 170.000000 4 RTR CBR 3 2 2 7 LLF\n\
             s 179.000000 1 RTR DSDV - - 1 -1 -\n",
        );
        assert!(r.samples.is_empty());
        assert_eq!(r.censored, 1);
        assert_eq!(r.mean(), None);
    }

    #[test]
    fn drops_before_first_delivery_do_not_open() {
        let r = analyze(
            "d 1.000000 2 RTR CBR 0 0 2 9 NRTE\n\
             d 1.100000 2 RTR CBR 0 1 2 9 NRTE\n\
             r 4.000000 9 AGT CBR 0 2 2 9 -\n",
        );
        assert!(r.samples.is_empty());
        assert_eq!(r.censored, 0);
    }

    #[test]
    fn other_reasons_and_control_drops_ignored() {
        let r = analyze(
            "r 1.000000 9 AGT CBR 0 0 2 9 -\n\
             d 2.000000 2 RTR CBR 0 1 2 9 TTL\n\
             d 2.500000 3 RTR AODV - - 3 -1 DUP\n\
             r 3.000000 9 AGT CBR 0 2 2 9 -\n",
        );
        assert!(r.samples.is_empty());
    }

    #[test]
    fn intermediate_receptions_do_not_close() {
        let r = analyze(
            "r 1.000000 9 AGT CBR 0 0 2 9 -\n\
             d 2.000000 2 RTR CBR 0 1 2 9 NRTE\n\
             r 2.100000 5 RTR CBR 0 2 2 9 -\n\
             r 2.200000 9 AGT CBR 0 2 2 9 -\n",
        );
        assert_eq!(r.samples[0].restored_at, SimTime::from_secs_f64(2.2));
    }

    #[test]
    fn mean_and_empty_marker() {
        let mk = |f: u64, r: u64| ConvergenceSample {
            flow: FlowId(0),
            fault_at: SimTime::from_secs(f),
            restored_at: SimTime::from_secs(r),
        };
        assert_eq!(scenario_convergence_time(&[mk(1, 3), mk(10, 14)]), Some(3.0));
        assert_eq!(scenario_convergence_time(&[]), None);
    }

    #[test]
    fn strict_mode_reports_line_number() {
        let err = convergence_events("# header\nr 1.000000 9 AGT CBR 0 0 2 9 -\ngarbage\n".as_bytes(), ParseMode::Strict)
            .unwrap_err();
        assert!(matches!(err, AnalysisError::Malformed { line: 3, .. }));
        let lenient =
            convergence_events("r 1.000000 9 AGT CBR 0 0 2 9 -\ngarbage\n".as_bytes(), ParseMode::Lenient).unwrap();
        assert_eq!(lenient.skipped.len(), 1);
        assert_eq!(lenient.skipped[0].0, 2);
    }

    #[test]
    fn unsorted_trace_rejected() {
        let err = convergence_events(
            "r 2.000000 9 AGT CBR 0 0 2 9 -\nr 1.000000 9 AGT CBR 0 1 2 9 -\n".as_bytes(),
            ParseMode::Strict,
        )
        .unwrap_err();
        assert!(matches!(err, AnalysisError::Unsorted { line: 2, .. }));
    }
}
