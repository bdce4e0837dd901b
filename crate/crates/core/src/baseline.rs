//! Non-self-stabilizing reference protocols: ND-broadcast and the
//! Bracha-Toueg BRB. Both are event-driven and assume reliable channels;
//! they serve as differential oracles for fault-free runs.
//!
//! Thresholds here ignore [`Params::mutation`] so the oracle stays sound when
//! the self-stabilizing object is deliberately broken.

use std::collections::{BTreeMap, BTreeSet};

use crate::params::{NodeId, Params, Value};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BtMessage {
    Init(Value),
    Echo(NodeId, Value),
    Ready(NodeId, Value),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BtEvent {
    Broadcast(Value),
    Arrival { from: NodeId, msg: BtMessage },
}

/// Messages to send to every node (self included) and at most one delivery.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Output {
    pub broadcast: Vec<BtMessage>,
    pub delivered: Option<(NodeId, Value)>,
}

fn strict_echo_quorum(params: &Params, count: usize) -> bool {
    2 * count > params.n + params.t
}

type Support = BTreeMap<NodeId, BTreeMap<Value, BTreeSet<NodeId>>>;

fn record(support: &mut Support, k: NodeId, m: &Value, sender: NodeId) -> usize {
    let senders = support.entry(k).or_default().entry(m.clone()).or_default();
    senders.insert(sender);
    senders.len()
}

/// ND-broadcast state for one node.
#[derive(Clone, Debug, Default)]
pub struct NdState {
    init_seen: BTreeSet<NodeId>,
    echoed: Support,
    delivered: BTreeMap<NodeId, Value>,
}

impl NdState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn delivered(&self) -> &BTreeMap<NodeId, Value> {
        &self.delivered
    }

    pub fn handle(&mut self, params: &Params, event: BtEvent) -> Output {
        let mut out = Output::default();
        match event {
            BtEvent::Broadcast(v) => out.broadcast.push(BtMessage::Init(v)),
            BtEvent::Arrival { from, msg: BtMessage::Init(v) } => {
                if self.init_seen.insert(from) {
                    out.broadcast.push(BtMessage::Echo(from, v));
                }
            }
            BtEvent::Arrival { from, msg: BtMessage::Echo(k, m) } => {
                let count = record(&mut self.echoed, k, &m, from);
                if strict_echo_quorum(params, count) && !self.delivered.contains_key(&k) {
                    self.delivered.insert(k, m.clone());
                    out.delivered = Some((k, m));
                }
            }
            // READY is not part of ND-broadcast.
            BtEvent::Arrival { msg: BtMessage::Ready(..), .. } => {}
        }
        out
    }
}

/// Bracha-Toueg BRB state for one node.
#[derive(Clone, Debug, Default)]
pub struct BtState {
    init_seen: BTreeSet<NodeId>,
    echoed: Support,
    readied: Support,
    sent_ready: BTreeSet<(NodeId, Value)>,
    delivered: BTreeMap<NodeId, Value>,
}

impl BtState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn delivered(&self) -> &BTreeMap<NodeId, Value> {
        &self.delivered
    }

    pub fn sent_ready(&self, k: NodeId, m: &Value) -> bool {
        self.sent_ready.contains(&(k, m.clone()))
    }

    pub fn handle(&mut self, params: &Params, event: BtEvent) -> Output {
        let mut out = Output::default();
        match event {
            BtEvent::Broadcast(v) => out.broadcast.push(BtMessage::Init(v)),
            BtEvent::Arrival { from, msg: BtMessage::Init(v) } => {
                if self.init_seen.insert(from) {
                    out.broadcast.push(BtMessage::Echo(from, v));
                }
            }
            BtEvent::Arrival { from, msg: BtMessage::Echo(k, m) } => {
                let count = record(&mut self.echoed, k, &m, from);
                if strict_echo_quorum(params, count) && self.sent_ready.insert((k, m.clone())) {
                    out.broadcast.push(BtMessage::Ready(k, m));
                }
            }
            BtEvent::Arrival { from, msg: BtMessage::Ready(k, m) } => {
                let count = record(&mut self.readied, k, &m, from);
                if count > params.t && self.sent_ready.insert((k, m.clone())) {
                    out.broadcast.push(BtMessage::Ready(k, m.clone()));
                }
                if count > 2 * params.t && !self.delivered.contains_key(&k) {
                    self.delivered.insert(k, m.clone());
                    out.delivered = Some((k, m));
                }
            }
        }
        out
    }
}
