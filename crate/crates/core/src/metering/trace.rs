use crate::kernel::SimTime;
use crate::routing::DropReason;
use crate::{FlowId, NodeId};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TraceAction {
    Send,
    Recv,
    Drop,
    LinkFailure,
}

impl TraceAction {
    fn as_str(self) -> &'static str {
        match self {
            TraceAction::Send => "s",
            TraceAction::Recv => "r",
            TraceAction::Drop => "d",
            TraceAction::LinkFailure => "f",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layer {
    Rtr,
    Agt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Cbr,
    Aodv,
    Dsdv,
    Tora,
}

impl PacketKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PacketKind::Cbr => "CBR",
            PacketKind::Aodv => "AODV",
            PacketKind::Dsdv => "DSDV",
            PacketKind::Tora => "TORA",
        }
    }
}

/// One trace line:
/// `action time node layer pkt_type flow seq src dst reason`.
///
/// Absent flow, seq and reason print as `-`; a broadcast destination prints
/// as `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub action: TraceAction,
    pub time: SimTime,
    pub node: NodeId,
    pub layer: Layer,
    pub kind: PacketKind,
    pub flow: Option<FlowId>,
    pub seq: Option<u64>,
    pub src: NodeId,
    pub dst: Option<NodeId>,
    pub reason: Option<DropReason>,
}

struct Dash<T>(Option<T>);

impl<T: fmt::Display> fmt::Display for Dash<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Some(v) => v.fmt(f),
            None => f.write_str("-"),
        }
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let layer = match self.layer {
            Layer::Rtr => "RTR",
            Layer::Agt => "AGT",
        };
        write!(
            f,
            "{} {} {} {} {} {} {} {} ",
            self.action.as_str(),
            self.time,
            self.node,
            layer,
            self.kind.as_str(),
            Dash(self.flow),
            Dash(self.seq),
            self.src,
        )?;
        match self.dst {
            Some(d) => write!(f, "{d} ")?,
            None => f.write_str("-1 ")?,
        }
        match self.reason {
            Some(r) => f.write_str(r.as_str()),
            None => f.write_str("-"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct RecordError(String);

fn bad(msg: impl Into<String>) -> RecordError {
    RecordError(msg.into())
}

fn parse_opt<T: FromStr>(field: &str, what: &str) -> Result<Option<T>, RecordError> {
    if field == "-" {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| bad(format!("bad {what} `{field}`")))
}

impl FromStr for TraceRecord {
    type Err = RecordError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 10 {
            return Err(bad(format!("expected 10 fields, found {}", fields.len())));
        }
        let action = match fields[0] {
            "s" => TraceAction::Send,
            "r" => TraceAction::Recv,
            "d" => TraceAction::Drop,
            "f" => TraceAction::LinkFailure,
            other => return Err(bad(format!("unknown action `{other}`"))),
        };
        let time = SimTime::parse_secs(fields[1]).ok_or_else(|| bad(format!("bad time `{}`", fields[1])))?;
        let node = fields[2]
            .parse()
            .map(NodeId)
            .map_err(|_| bad(format!("bad node `{}`", fields[2])))?;
        let layer = match fields[3] {
            "RTR" => Layer::Rtr,
            "AGT" => Layer::Agt,
            other => return Err(bad(format!("unknown layer `{other}`"))),
        };
        let kind = match fields[4] {
            "CBR" => PacketKind::Cbr,
            "AODV" => PacketKind::Aodv,
            "DSDV" => PacketKind::Dsdv,
            "TORA" => PacketKind::Tora,
            other => return Err(bad(format!("unknown packet type `{other}`"))),
        };
        let flow = parse_opt::<u32>(fields[5], "flow")?.map(FlowId);
        let seq = parse_opt::<u64>(fields[6], "seq")?;
        let src = fields[7]
            .parse()
            .map(NodeId)
            .map_err(|_| bad(format!("bad src `{}`", fields[7])))?;
        let dst = match fields[8] {
            "-1" => None,
            d => Some(NodeId(d.parse().map_err(|_| bad(format!("bad dst `{d}`")))?)),
        };
        let reason = match fields[9] {
            "-" => None,
            r => Some(DropReason::parse(r).ok_or_else(|| bad(format!("unknown reason `{r}`")))?),
        };
        Ok(TraceRecord {
            action,
            time,
            node,
            layer,
            kind,
            flow,
            seq,
            src,
            dst,
            reason,
        })
    }
}

/// Line writer for a run's trace. With no sink attached records are only
/// checked for ordering.
pub struct TraceWriter {
    out: Option<Box<dyn Write + Send>>,
    last: SimTime,
    lines: u64,
}

impl TraceWriter {
    pub fn new(out: Box<dyn Write + Send>) -> Self {
        TraceWriter {
            out: Some(out),
            last: SimTime::ZERO,
            lines: 0,
        }
    }

    pub fn discard() -> Self {
        TraceWriter {
            out: None,
            last: SimTime::ZERO,
            lines: 0,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.out.is_some()
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    pub fn header(&mut self, text: &str) -> io::Result<()> {
        if let Some(out) = self.out.as_mut() {
            writeln!(out, "# {text}")?;
        }
        Ok(())
    }

    pub fn record(&mut self, rec: &TraceRecord) -> io::Result<()> {
        debug_assert!(rec.time >= self.last, "trace time went backwards");
        self.last = rec.time;
        self.lines += 1;
        if let Some(out) = self.out.as_mut() {
            writeln!(out, "{rec}")?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self.out.as_mut() {
            Some(out) => out.flush(),
            None => Ok(()),
        }
    }
}
