//! Line-oriented event trace: `step|node|event|key=value,...`.
//!
//! Lines starting with `#` form the header. Payload bytes are hex. Checkers
//! read [`TraceRecord`]s only, so a parsed trace yields the same reports as
//! the in-memory one.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::irc::Round;
use crate::node::NodeEvent;
use crate::params::{NodeId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropReason {
    Loss,
    Overflow,
    Bml,
}

impl DropReason {
    fn name(self) -> &'static str {
        match self {
            DropReason::Loss => "loss",
            DropReason::Overflow => "overflow",
            DropReason::Bml => "bml",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    Tick,
    Recv { from: NodeId, inst: u32, digest: String },
    Drop { from: NodeId, to: NodeId, inst: u32, why: DropReason },
    Dup { from: NodeId, to: NodeId, inst: u32 },
    Node(NodeEvent),
    Corrupt { scope: String },
    Snapshot { round: u64, bad_nodes: BTreeSet<NodeId>, bad_channels: u64 },
    BtDeliver { inst: u32, from: NodeId, value: Value },
    Stop { reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub step: u64,
    pub node: Option<NodeId>,
    pub event: TraceEvent,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    /// Header lines without the leading `#`.
    pub header: Vec<String>,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

fn set_str(set: &BTreeSet<NodeId>) -> String {
    set.iter().map(|n| n.0.to_string()).collect::<Vec<_>>().join(";")
}

fn clean(s: &str) -> String {
    s.chars().map(|c| if matches!(c, '|' | ',' | '=' | '\n') { '_' } else { c }).collect()
}

impl TraceEvent {
    fn render(&self) -> (String, String) {
        use NodeEvent as E;
        let (name, kv): (&str, String) = match self {
            TraceEvent::Tick => ("tick", String::new()),
            TraceEvent::Recv { from, inst, digest } => ("recv", format!("from={},inst={inst},digest={digest}", from.0)),
            TraceEvent::Drop { from, to, inst, why } => {
                ("drop", format!("from={},to={},inst={inst},why={}", from.0, to.0, why.name()))
            }
            TraceEvent::Dup { from, to, inst } => ("dup", format!("from={},to={},inst={inst}", from.0, to.0)),
            TraceEvent::Corrupt { scope } => ("corrupt", format!("scope={scope}")),
            TraceEvent::Snapshot { round, bad_nodes, bad_channels } => (
                "snap",
                format!("round={round},bad_nodes={},bad_channels={bad_channels}", set_str(bad_nodes)),
            ),
            TraceEvent::BtDeliver { inst, from, value } => ("btdeliver", format!("inst={inst},from={},value={value}", from.0)),
            TraceEvent::Stop { reason } => ("stop", format!("reason={reason}")),
            TraceEvent::Node(e) => match e {
                E::Broadcast { inst, round, value, filler } => (
                    "bcast",
                    format!("inst={inst},round={round},value={value},filler={}", *filler as u8),
                ),
                E::Deliver { inst, from, round, value } => {
                    ("deliver", format!("inst={inst},from={},round={round},value={value}", from.0))
                }
                E::Increment { inst, round } => ("incr", format!("inst={inst},round={round}")),
                E::Enabled { inst, round } => ("enabled", format!("inst={inst},round={round}")),
                E::Fetch { inst, from, round } => ("fetch", format!("inst={inst},from={},round={round}", from.0)),
                E::Fresh { inst, from, round } => ("fresh", format!("inst={inst},from={},round={round}", from.0)),
                E::Resync { inst, from, round } => ("resync", format!("inst={inst},from={},round={round}", from.0)),
                E::Trusted { inst, round, set } => ("trusted", format!("inst={inst},round={round},set={}", set_str(set))),
                E::Malformed { from, reason } => ("malformed", format!("from={},reason={}", from.0, clean(reason))),
            },
        };
        (name.to_string(), kv)
    }
}

impl TraceRecord {
    pub fn render(&self) -> String {
        let node = self.node.map_or_else(|| "-".to_string(), |n| n.to_string());
        let (name, kv) = self.event.render();
        format!("{}|{}|{}|{}", self.step, node, name, kv)
    }
}

impl Trace {
    pub fn push(&mut self, step: u64, node: Option<NodeId>, event: TraceEvent) {
        self.records.push(TraceRecord { step, node, event });
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for h in &self.header {
            let _ = writeln!(out, "#{h}");
        }
        for r in &self.records {
            out.push_str(&r.render());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut trace = Trace::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if let Some(h) = line.strip_prefix('#') {
                trace.header.push(h.to_string());
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let record = parse_record(line).map_err(|msg| TraceError::Malformed { line: line_no, msg })?;
            trace.records.push(record);
        }
        Ok(trace)
    }

    /// The last step recorded, i.e. the horizon actually reached.
    pub fn last_step(&self) -> u64 {
        self.records.last().map_or(0, |r| r.step)
    }

    /// The records at the given steps, plus corruption markers and the stop
    /// record, under the same header.
    pub fn slice(&self, steps: &[u64]) -> Trace {
        let records = self
            .records
            .iter()
            .filter(|r| steps.contains(&r.step) || matches!(r.event, TraceEvent::Corrupt { .. } | TraceEvent::Stop { .. }))
            .cloned()
            .collect();
        Trace { header: self.header.clone(), records }
    }

    /// Header entries of the form `key=value`.
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find_map(|h| h.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
    }
}

struct Fields<'a>(Vec<(&'a str, &'a str)>);

impl<'a> Fields<'a> {
    fn parse(kv: &'a str) -> Result<Self, String> {
        if kv.is_empty() {
            return Ok(Fields(Vec::new()));
        }
        kv.split(',')
            .map(|p| p.split_once('=').ok_or_else(|| format!("bad field {p:?}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Fields)
    }

    fn get(&self, key: &str) -> Result<&'a str, String> {
        self.0.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).ok_or_else(|| format!("missing {key}"))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T, String> {
        self.get(key)?.parse().map_err(|_| format!("bad number in {key}"))
    }

    fn node(&self, key: &str) -> Result<NodeId, String> {
        Ok(NodeId(self.num(key)?))
    }

    fn round(&self, key: &str) -> Result<Round, String> {
        Ok(Round::from_raw(self.num(key)?))
    }

    fn value(&self, key: &str) -> Result<Value, String> {
        hex::decode(self.get(key)?).map(Value::new).map_err(|e| format!("bad hex in {key}: {e}"))
    }

    fn set(&self, key: &str) -> Result<BTreeSet<NodeId>, String> {
        let s = self.get(key)?;
        if s.is_empty() {
            return Ok(BTreeSet::new());
        }
        s.split(';').map(|x| x.parse().map(NodeId).map_err(|_| format!("bad set {s}"))).collect()
    }
}

fn parse_record(line: &str) -> Result<TraceRecord, String> {
    let mut parts = line.splitn(4, '|');
    let step: u64 = parts.next().ok_or("missing step")?.parse().map_err(|_| "bad step")?;
    let node_s = parts.next().ok_or("missing node")?;
    let node = if node_s == "-" {
        None
    } else {
        Some(NodeId(node_s.strip_prefix('p').ok_or("bad node")?.parse().map_err(|_| "bad node")?))
    };
    let name = parts.next().ok_or("missing event")?;
    let f = Fields::parse(parts.next().unwrap_or(""))?;
    use NodeEvent as E;
    let event = match name {
        "tick" => TraceEvent::Tick,
        "recv" => TraceEvent::Recv { from: f.node("from")?, inst: f.num("inst")?, digest: f.get("digest")?.to_string() },
        "drop" => TraceEvent::Drop {
            from: f.node("from")?,
            to: f.node("to")?,
            inst: f.num("inst")?,
            why: match f.get("why")? {
                "loss" => DropReason::Loss,
                "overflow" => DropReason::Overflow,
                "bml" => DropReason::Bml,
                w => return Err(format!("bad drop reason {w}")),
            },
        },
        "dup" => TraceEvent::Dup { from: f.node("from")?, to: f.node("to")?, inst: f.num("inst")? },
        "corrupt" => TraceEvent::Corrupt { scope: f.get("scope")?.to_string() },
        "snap" => TraceEvent::Snapshot {
            round: f.num("round")?,
            bad_nodes: f.set("bad_nodes")?,
            bad_channels: f.num("bad_channels")?,
        },
        "btdeliver" => TraceEvent::BtDeliver { inst: f.num("inst")?, from: f.node("from")?, value: f.value("value")? },
        "stop" => TraceEvent::Stop { reason: f.get("reason")?.to_string() },
        "bcast" => TraceEvent::Node(E::Broadcast {
            inst: f.num("inst")?,
            round: f.round("round")?,
            value: f.value("value")?,
            filler: f.get("filler")? == "1",
        }),
        "deliver" => TraceEvent::Node(E::Deliver {
            inst: f.num("inst")?,
            from: f.node("from")?,
            round: f.round("round")?,
            value: f.value("value")?,
        }),
        "incr" => TraceEvent::Node(E::Increment { inst: f.num("inst")?, round: f.round("round")? }),
        "enabled" => TraceEvent::Node(E::Enabled { inst: f.num("inst")?, round: f.round("round")? }),
        "fetch" => TraceEvent::Node(E::Fetch { inst: f.num("inst")?, from: f.node("from")?, round: f.round("round")? }),
        "fresh" => TraceEvent::Node(E::Fresh { inst: f.num("inst")?, from: f.node("from")?, round: f.round("round")? }),
        "resync" => TraceEvent::Node(E::Resync { inst: f.num("inst")?, from: f.node("from")?, round: f.round("round")? }),
        "trusted" => TraceEvent::Node(E::Trusted { inst: f.num("inst")?, round: f.round("round")?, set: f.set("set")? }),
        "malformed" => TraceEvent::Node(E::Malformed { from: f.node("from")?, reason: f.get("reason")?.to_string() }),
        other => return Err(format!("unknown event {other}")),
    };
    Ok(TraceRecord { step, node, event })
}
