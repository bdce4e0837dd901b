//! One node: δ independent (BRB, counter, detector) triples behind a single
//! wire format, plus the repeated-broadcast queue and FIFO delivery.
//!
//! With gating on, every value handed to a BRB instance is prefixed with the
//! counter round it belongs to (`[round u32 LE][payload]`). Incoming INIT
//! values and ECHO/READY pairs are only merged when that prefix matches the
//! receiver's current view of the broadcaster's round, so material from a
//! finished round cannot leak into the next one.

pub mod wire;

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use crate::brb::{BrbEntry, BrbState};
use crate::irc::{IrcHooks, IrcState, Round};
use crate::muteness::MutenessState;
use crate::params::{NodeId, Params, Value};

pub use wire::{decode, encode, WireError, WireMessage};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeConfig {
    /// Gate broadcast and delivery through the round counter. Off means
    /// `tx_available` and `rx_available` are constantly true.
    pub gated: bool,
    /// Drive the counter alone: increment and fetch on every tick.
    pub irc_only: bool,
    /// With `irc_only`, stop after this many increments per instance.
    pub increments: Option<u64>,
    /// Assign broadcasts to instances cyclically and deliver in label order.
    pub fifo: bool,
    /// Replace the detector's output with the full peer set.
    pub trust_all: bool,
    pub reply_only_to_ack_requests: bool,
    pub queue_depth: usize,
    /// Re-align `cur[j]` when `capacity + 1` consecutive requests from `j`
    /// all name the same stale round.
    pub resync: bool,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            gated: true,
            irc_only: false,
            increments: None,
            fifo: false,
            trust_all: false,
            reply_only_to_ack_requests: false,
            queue_depth: 1024,
            resync: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeEvent {
    Broadcast { inst: usize, round: Round, value: Value, filler: bool },
    Deliver { inst: usize, from: NodeId, round: Round, value: Value },
    Increment { inst: usize, round: Round },
    Enabled { inst: usize, round: Round },
    Fetch { inst: usize, from: NodeId, round: Round },
    Fresh { inst: usize, from: NodeId, round: Round },
    Resync { inst: usize, from: NodeId, round: Round },
    Trusted { inst: usize, round: Round, set: BTreeSet<NodeId> },
    Malformed { from: NodeId, reason: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NodeError {
    #[error("broadcast queue full ({0} pending)")]
    QueueFull(usize),
    #[error("value of {len} bytes exceeds {max}")]
    ValueTooLong { len: usize, max: usize },
}

/// Result of handing a value to [`NodeState::repeated_broadcast`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    Started(usize),
    Queued,
}

pub const STAMP_LEN: usize = 4;

pub fn stamp(round: Round, payload: &[u8], params: &Params) -> Value {
    let mut bytes = round.pos(params.big_b).to_le_bytes().to_vec();
    bytes.extend_from_slice(payload);
    Value::new(bytes)
}

pub fn unstamp(v: &Value) -> Option<(u32, &[u8])> {
    let b = v.as_bytes();
    if b.len() < STAMP_LEN {
        return None;
    }
    let round = u32::from_le_bytes(b[..STAMP_LEN].try_into().expect("4 bytes"));
    Some((round, &b[STAMP_LEN..]))
}

fn stamp_matches(v: &Value, cur: Round, params: &Params) -> bool {
    !cur.is_sentinel() && unstamp(v).is_some_and(|(r, _)| r == cur.pos(params.big_b))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub brb: BrbState,
    pub irc: IrcState,
    pub md: MutenessState,
    /// The application payload of the own current broadcast and its round.
    pub outgoing: Option<(Round, Value)>,
    /// Ungated delivery record; a self-recycle may clear `wasDelivered`.
    pub app_delivered: Vec<bool>,
    /// Recent request rounds per sender.
    pub seen: Vec<VecDeque<Round>>,
    /// Increments made since start, for the `increments` budget.
    pub made: u64,
    /// FIFO mode: per sender, a value taken from this instance and waiting
    /// for its label's turn. An occupied slot blocks the next fetch.
    pub held: Vec<Option<(Round, Value)>>,
    last_trusted: BTreeSet<NodeId>,
    was_enabled: bool,
}

impl Instance {
    fn new(me: NodeId, params: &Params, cfg: &NodeConfig) -> Self {
        let mut irc = IrcState::new(me, params);
        irc.reply_only_to_ack_requests = cfg.reply_only_to_ack_requests;
        Instance {
            brb: BrbState::new(me, params),
            irc,
            md: MutenessState::new(me, params),
            outgoing: None,
            app_delivered: vec![false; params.n],
            seen: vec![VecDeque::new(); params.n],
            made: 0,
            held: vec![None; params.n],
            last_trusted: params.nodes().filter(|j| *j != me).collect(),
            was_enabled: false,
        }
    }
}

struct Hooks<'a> {
    brb: &'a mut BrbState,
    md: &'a mut MutenessState,
    params: &'a Params,
    purge: bool,
}

impl IrcHooks for Hooks<'_> {
    fn recycle(&mut self, k: NodeId) {
        self.brb.recycle(k);
        if self.purge {
            self.brb.purge_broadcaster(k);
        }
    }

    fn md_reset(&mut self) {
        self.md.md_reset();
    }

    fn md_cnt(&mut self, j: NodeId) {
        self.md.md_cnt(j, self.params);
    }
}

#[derive(Clone, Debug)]
pub struct NodeState {
    me: NodeId,
    params: Params,
    cfg: NodeConfig,
    pub instances: Vec<Instance>,
    pub pending: VecDeque<Value>,
    pub fifo_next: Vec<usize>,
    pub next_label: usize,
    events: Vec<NodeEvent>,
}

impl NodeState {
    pub fn new(me: NodeId, params: &Params, cfg: NodeConfig) -> Self {
        let instances = (0..params.delta).map(|_| Instance::new(me, params, &cfg)).collect();
        NodeState {
            me,
            params: params.clone(),
            cfg,
            instances,
            pending: VecDeque::new(),
            fifo_next: vec![0; params.n],
            next_label: 0,
            events: Vec::new(),
        }
    }

    pub fn me(&self) -> NodeId {
        self.me
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn config(&self) -> &NodeConfig {
        &self.cfg
    }

    /// Whether an `Enabled` event has been emitted for the current round
    /// of instance `a`.
    pub fn reported_enabled(&self, a: usize) -> bool {
        self.instances[a].was_enabled
    }

    pub fn take_events(&mut self) -> Vec<NodeEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn trusted(&self, inst: usize) -> BTreeSet<NodeId> {
        if self.cfg.trust_all {
            self.params.nodes().filter(|j| *j != self.me).collect()
        } else {
            self.instances[inst].md.trusted(&self.params)
        }
    }

    /// Starts `v` on a free instance or queues it.
    pub fn repeated_broadcast(&mut self, v: Value) -> Result<Placement, NodeError> {
        let max = self.params.max_value_len - if self.cfg.gated { STAMP_LEN } else { 0 };
        if v.len() > max {
            return Err(NodeError::ValueTooLong { len: v.len(), max });
        }
        if self.pending.is_empty() {
            if let Some(inst) = self.try_start(&v) {
                return Ok(Placement::Started(inst));
            }
        }
        if self.pending.len() >= self.cfg.queue_depth {
            return Err(NodeError::QueueFull(self.pending.len()));
        }
        self.pending.push_back(v);
        Ok(Placement::Queued)
    }

    fn try_start(&mut self, v: &Value) -> Option<usize> {
        let candidates: Vec<usize> = if self.cfg.fifo {
            vec![self.next_label % self.params.delta]
        } else {
            (0..self.params.delta).collect()
        };
        for a in candidates {
            let round = if self.cfg.gated {
                let trusted = self.trusted(a);
                let Instance { brb, irc, md, .. } = &mut self.instances[a];
                let mut hooks = Hooks { brb, md, params: &self.params, purge: true };
                match irc.increment(&trusted, &mut hooks) {
                    Some(r) => r,
                    None => continue,
                }
            } else {
                if self.instances[a].outgoing.is_some() {
                    continue;
                }
                Round::SENTINEL
            };
            let inst = &mut self.instances[a];
            if self.cfg.gated {
                inst.was_enabled = false;
            }
            let wire_value = if self.cfg.gated { stamp(round, v.as_bytes(), &self.params) } else { v.clone() };
            inst.brb.broadcast(wire_value, true);
            inst.outgoing = Some((round, v.clone()));
            if self.cfg.gated {
                self.events.push(NodeEvent::Increment { inst: a, round });
            }
            self.events.push(NodeEvent::Broadcast { inst: a, round, value: v.clone(), filler: false });
            self.next_label = (a + 1) % self.params.delta;
            return Some(a);
        }
        None
    }

    fn start_pending(&mut self) {
        while let Some(v) = self.pending.front().cloned() {
            if self.try_start(&v).is_none() {
                break;
            }
            self.pending.pop_front();
        }
    }

    fn observe_counter(&mut self) {
        if !(self.cfg.gated || self.cfg.irc_only) {
            return;
        }
        for a in 0..self.params.delta {
            let trusted = self.trusted(a);
            let inst = &mut self.instances[a];
            let round = inst.irc.own_round();
            if trusted != inst.last_trusted {
                inst.last_trusted = trusted.clone();
                self.events.push(NodeEvent::Trusted { inst: a, round, set: trusted.clone() });
            }
            let enabled = inst.irc.increment_enabled(&trusted);
            if enabled && !inst.was_enabled {
                self.events.push(NodeEvent::Enabled { inst: a, round });
            }
            inst.was_enabled = enabled;
        }
    }

    /// The do-forever iteration: returns one message per peer and instance.
    pub fn tick(&mut self) -> Vec<(NodeId, WireMessage)> {
        self.poll_deliveries();
        self.observe_counter();
        if self.cfg.irc_only {
            self.irc_only_step();
        } else {
            self.start_pending();
        }
        self.observe_counter();
        let mut out = Vec::with_capacity(self.params.delta * (self.params.n - 1));
        for a in 0..self.params.delta {
            let payload = if self.cfg.irc_only { BrbEntry::default() } else { self.refresh_payload(a) };
            let inst = &self.instances[a];
            for j in self.params.nodes().filter(|j| *j != self.me) {
                out.push((j, WireMessage { instance: a as u32, brb: payload.clone(), irc: inst.irc.tx(j) }));
            }
        }
        out
    }

    fn irc_only_step(&mut self) {
        for a in 0..self.params.delta {
            let trusted = self.trusted(a);
            let Instance { brb, irc, md, was_enabled, made, .. } = &mut self.instances[a];
            let mut hooks = Hooks { brb, md, params: &self.params, purge: false };
            let budget_left = self.cfg.increments.is_none_or(|b| *made < b);
            if let Some(round) = budget_left.then(|| irc.increment(&trusted, &mut hooks)).flatten() {
                *made += 1;
                *was_enabled = false;
                self.events.push(NodeEvent::Increment { inst: a, round });
            }
            for k in self.params.nodes() {
                if let Some(round) = irc.fetch(k) {
                    self.events.push(NodeEvent::Fetch { inst: a, from: k, round });
                }
            }
        }
    }

    /// Runs the BRB local step and keeps the own INIT in place.
    fn refresh_payload(&mut self, a: usize) -> BrbEntry {
        let me = self.me;
        let gated = self.cfg.gated;
        let inst = &mut self.instances[a];
        inst.brb.local_step();
        let want = if gated {
            let cur = inst.irc.own_round();
            if cur.is_sentinel() {
                None
            } else {
                let current = matches!(&inst.outgoing, Some((r, _)) if *r == cur);
                if !current {
                    inst.outgoing = Some((cur, Value::default()));
                    self.events.push(NodeEvent::Broadcast { inst: a, round: cur, value: Value::default(), filler: true });
                }
                let (_, v) = inst.outgoing.as_ref().expect("set above");
                Some(stamp(cur, v.as_bytes(), &self.params))
            }
        } else {
            inst.outgoing.as_ref().map(|(_, v)| v.clone())
        };
        if let Some(w) = want {
            let own = inst.brb.entry_mut(me);
            if own.init.len() != 1 || !own.init.contains(&w) {
                own.init = BTreeSet::from([w]);
            }
        }
        inst.brb.entry(me).clone()
    }

    fn try_deliver(&mut self, a: usize, k: NodeId) -> Option<Value> {
        let (round, v) = self.take(a, k)?;
        self.events.push(NodeEvent::Deliver { inst: a, from: k, round, value: v.clone() });
        Some(v)
    }

    /// BRB delivery of `k`'s current value on instance `a`, gated by the
    /// counter when enabled. Emits the fetch but not the app delivery.
    fn take(&mut self, a: usize, k: NodeId) -> Option<(Round, Value)> {
        if self.cfg.irc_only {
            return None;
        }
        let inst = &mut self.instances[a];
        if !self.cfg.gated {
            if inst.app_delivered[k.0] {
                return None;
            }
            let v = inst.brb.deliver(k, || true)?;
            inst.app_delivered[k.0] = true;
            return Some((Round::SENTINEL, v));
        }
        let cur = inst.irc.cur[k.0];
        let (m, _) = inst.brb.quorum_value(k)?;
        if !stamp_matches(&m, cur, &self.params) {
            return None;
        }
        let irc = &mut inst.irc;
        let mut fetched = None;
        let v = inst.brb.deliver(k, || {
            fetched = irc.fetch(k);
            fetched.is_some()
        })?;
        let round = fetched.expect("gate passed");
        let payload = Value::new(unstamp(&v).expect("stamp checked").1.to_vec());
        self.events.push(NodeEvent::Fetch { inst: a, from: k, round });
        Some((round, payload))
    }

    /// In-order drain for broadcaster `k`: labels come out as
    /// `fifo_next[k], fifo_next[k]+1, ...` and stop at the first gap.
    ///
    /// Every instance is taken from independently into its `held` slot, so
    /// a stuck label never stops the counters of the other instances; only
    /// the hand-over to the application waits for order.
    pub fn fifo_poll(&mut self, k: NodeId) -> Vec<(usize, Value)> {
        for a in 0..self.params.delta {
            if self.instances[a].held[k.0].is_none() {
                self.instances[a].held[k.0] = self.take(a, k);
            }
        }
        let mut out = Vec::new();
        for _ in 0..self.params.delta {
            let label = self.fifo_next[k.0] % self.params.delta;
            let Some((round, v)) = self.instances[label].held[k.0].take() else { break };
            self.events.push(NodeEvent::Deliver { inst: label, from: k, round, value: v.clone() });
            out.push((label, v));
            self.fifo_next[k.0] = (label + 1) % self.params.delta;
        }
        out
    }

    fn poll_deliveries(&mut self) {
        for k in self.params.nodes() {
            if self.cfg.fifo {
                self.fifo_poll(k);
            } else {
                for a in 0..self.params.delta {
                    self.try_deliver(a, k);
                }
            }
        }
    }

    /// Drops pairs whose round prefix does not match the current view.
    fn filter(&self, a: usize, j: NodeId, payload: &BrbEntry) -> BrbEntry {
        let irc = &self.instances[a].irc;
        let p = &self.params;
        BrbEntry {
            init: payload.init.iter().filter(|v| stamp_matches(v, irc.cur[j.0], p)).cloned().collect(),
            echo: payload.echo.iter().filter(|(k, v)| stamp_matches(v, irc.cur[k.0], p)).cloned().collect(),
            ready: payload.ready.iter().filter(|(k, v)| stamp_matches(v, irc.cur[k.0], p)).cloned().collect(),
        }
    }

    /// The payload part that would survive the merge filter.
    pub fn admissible(&self, a: usize, j: NodeId, payload: &BrbEntry) -> BrbEntry {
        if self.cfg.gated {
            self.filter(a, j, payload)
        } else {
            payload.clone()
        }
    }

    pub fn on_message(&mut self, j: NodeId, w: &WireMessage) -> Option<(NodeId, WireMessage)> {
        let a = w.instance as usize;
        if j == self.me || j.0 >= self.params.n || a >= self.params.delta {
            self.events.push(NodeEvent::Malformed { from: j, reason: "bad header".into() });
            return None;
        }
        if let Err(e) = self.instances[a].brb.check_payload(&w.brb) {
            self.events.push(NodeEvent::Malformed { from: j, reason: e.to_string() });
            return None;
        }
        if !self.cfg.irc_only {
            let payload = self.admissible(a, j, &w.brb);
            self.instances[a].brb.merge_incoming(j, &payload).expect("payload checked");
        }
        if !(self.cfg.gated || self.cfg.irc_only) {
            return None;
        }
        let purge = self.cfg.gated;
        let window = self.params.capacity + 1;
        let b = self.params.big_b;
        let Instance { brb, irc, md, seen, .. } = &mut self.instances[a];
        let mut hooks = Hooks { brb, md, params: &self.params, purge };
        let outcome = irc.rx(j, w.irc, &mut hooks);
        if let crate::irc::RxOutcome::Received { fresh: true, .. } = outcome {
            self.events.push(NodeEvent::Fresh { inst: a, from: j, round: irc.cur[j.0] });
        }
        if self.cfg.resync && w.irc.ack {
            let seq = Round::new(w.irc.seq.raw(), b);
            let hist = &mut seen[j.0];
            hist.push_back(seq);
            while hist.len() > window {
                hist.pop_front();
            }
            if hist.len() == window && hist.iter().all(|s| *s == seq) && seq != irc.cur[j.0] {
                irc.cur[j.0] = seq;
                irc.nxt[j.0] = if seq.is_sentinel() { seq } else { Round::new(seq.raw() - 1, b) };
                hooks.recycle(j);
                hist.clear();
                self.events.push(NodeEvent::Resync { inst: a, from: j, round: seq });
            }
        }
        outcome.reply().map(|irc| (j, WireMessage { instance: w.instance, brb: BrbEntry::default(), irc }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irc::IrcWire;

    fn p() -> Params {
        Params::default()
    }

    fn node(me: usize, params: &Params, cfg: NodeConfig) -> NodeState {
        NodeState::new(NodeId(me), params, cfg)
    }

    #[test]
    fn tick_fans_out_per_instance() {
        let one = Params { delta: 1, ..p() };
        let mut n = node(0, &one, NodeConfig::default());
        assert_eq!(n.tick().len(), 3);
        let mut n = node(0, &p(), NodeConfig::default());
        let out = n.tick();
        assert_eq!(out.len(), 6);
        assert_eq!(out.iter().filter(|(_, w)| w.instance == 1).count(), 3);
    }

    #[test]
    fn broadcast_lands_in_next_payload() {
        let mut n = node(0, &p(), NodeConfig::default());
        assert_eq!(n.repeated_broadcast(Value::from("hi")), Ok(Placement::Started(0)));
        let out = n.tick();
        let (_, first) = &out[0];
        assert_eq!(first.instance, 0);
        let stamped = stamp(Round::new(0, 32), b"hi", &p());
        assert!(first.brb.init.contains(&stamped));
        assert_eq!(first.irc.seq, Round::new(0, 32));
    }

    #[test]
    fn broadcasts_fill_lowest_free_then_queue() {
        let mut n = node(0, &p(), NodeConfig::default());
        assert_eq!(n.repeated_broadcast(Value::from("a")), Ok(Placement::Started(0)));
        assert_eq!(n.repeated_broadcast(Value::from("b")), Ok(Placement::Started(1)));
        assert_eq!(n.repeated_broadcast(Value::from("c")), Ok(Placement::Queued));
        let cfg = NodeConfig { queue_depth: 1, ..NodeConfig::default() };
        let mut n = node(0, &p(), cfg);
        n.repeated_broadcast(Value::from("a")).unwrap();
        n.repeated_broadcast(Value::from("b")).unwrap();
        n.repeated_broadcast(Value::from("c")).unwrap();
        assert_eq!(n.repeated_broadcast(Value::from("d")), Err(NodeError::QueueFull(1)));
    }

    #[test]
    fn fresh_round_recycles_slot() {
        let mut n = node(0, &p(), NodeConfig::default());
        n.instances[0].brb.entry_mut(NodeId(1)).init.insert(Value::from("old"));
        let w = WireMessage {
            instance: 0,
            brb: BrbEntry::default(),
            irc: IrcWire { ack: true, seq: Round::new(0, 32), lbl: 0 },
        };
        let reply = n.on_message(NodeId(1), &w).expect("reply");
        assert!(n.instances[0].brb.entry(NodeId(1)).is_empty());
        assert_eq!(reply.0, NodeId(1));
        assert!(!reply.1.irc.ack);
        assert!(reply.1.brb.is_empty());
    }

    #[test]
    fn matching_ack_is_silent() {
        let mut n = node(0, &p(), NodeConfig::default());
        n.repeated_broadcast(Value::from("a")).unwrap();
        let w = WireMessage {
            instance: 0,
            brb: BrbEntry::default(),
            irc: IrcWire { ack: false, seq: Round::new(0, 32), lbl: 0 },
        };
        assert!(n.on_message(NodeId(2), &w).is_none());
        assert_eq!(n.instances[0].irc.lbl[2], 1);
    }

    #[test]
    fn bad_instance_dropped() {
        let mut n = node(0, &p(), NodeConfig::default());
        let w = WireMessage {
            instance: 9,
            brb: BrbEntry::default(),
            irc: IrcWire { ack: true, seq: Round::SENTINEL, lbl: 0 },
        };
        assert!(n.on_message(NodeId(1), &w).is_none());
        assert!(matches!(n.take_events()[0], NodeEvent::Malformed { .. }));
    }

    #[test]
    fn filter_drops_other_rounds() {
        let mut n = node(0, &p(), NodeConfig::default());
        n.instances[0].irc.cur[1] = Round::new(3, 32);
        let mut payload = BrbEntry::default();
        payload.init.insert(stamp(Round::new(2, 32), b"old", &p()));
        payload.echo.insert((NodeId(1), stamp(Round::new(3, 32), b"new", &p())));
        payload.ready.insert((NodeId(2), stamp(Round::new(3, 32), b"x", &p())));
        let kept = n.admissible(0, NodeId(1), &payload);
        assert!(kept.init.is_empty());
        assert_eq!(kept.echo.len(), 1);
        assert!(kept.ready.is_empty());
    }

    fn ready_quorum(n: &mut NodeState, a: usize, k: NodeId, v: &Value) {
        for j in 0..3 {
            n.instances[a].brb.entry_mut(NodeId(j)).ready.insert((k, v.clone()));
        }
    }

    #[test]
    fn fifo_poll_waits_for_gap() {
        let cfg = NodeConfig { fifo: true, gated: false, ..NodeConfig::default() };
        let mut n = node(0, &p(), cfg);
        let k = NodeId(2);
        ready_quorum(&mut n, 1, k, &Value::from("m1"));
        assert!(n.fifo_poll(k).is_empty());
        ready_quorum(&mut n, 0, k, &Value::from("m0"));
        assert_eq!(n.fifo_poll(k), vec![(0, Value::from("m0")), (1, Value::from("m1"))]);
        assert!(n.fifo_poll(k).is_empty());
    }

    #[test]
    fn fifo_takes_later_labels_while_waiting() {
        let cfg = NodeConfig { fifo: true, ..NodeConfig::default() };
        let mut n = node(0, &p(), cfg);
        let k = NodeId(2);
        n.instances[1].irc.cur[2] = Round::new(0, 32);
        ready_quorum(&mut n, 1, k, &stamp(Round::new(0, 32), b"m1", &p()));
        assert!(n.fifo_poll(k).is_empty());
        // Fetched already, so the sender's counter on instance 1 is free.
        assert_eq!(n.instances[1].irc.nxt[2], Round::new(0, 32));
        assert!(n.instances[1].held[2].is_some());
        n.instances[0].irc.cur[2] = Round::new(0, 32);
        ready_quorum(&mut n, 0, k, &stamp(Round::new(0, 32), b"m0", &p()));
        assert_eq!(n.fifo_poll(k), vec![(0, Value::from("m0")), (1, Value::from("m1"))]);
    }

    #[test]
    fn gated_delivery_once_per_round() {
        let mut n = node(0, &p(), NodeConfig::default());
        let k = NodeId(2);
        n.instances[0].irc.cur[2] = Round::new(4, 32);
        n.instances[0].irc.nxt[2] = Round::new(3, 32);
        ready_quorum(&mut n, 0, k, &stamp(Round::new(4, 32), b"v", &p()));
        assert_eq!(n.try_deliver(0, k), Some(Value::from("v")));
        assert_eq!(n.try_deliver(0, k), None);
    }

    #[test]
    fn gated_delivery_ignores_other_round() {
        let mut n = node(0, &p(), NodeConfig::default());
        let k = NodeId(2);
        n.instances[0].irc.cur[2] = Round::new(5, 32);
        n.instances[0].irc.nxt[2] = Round::new(4, 32);
        ready_quorum(&mut n, 0, k, &stamp(Round::new(4, 32), b"v", &p()));
        assert_eq!(n.try_deliver(0, k), None);
        assert_eq!(n.instances[0].irc.nxt[2], Round::new(4, 32));
    }

    #[test]
    fn self_recycle_keeps_own_init() {
        let mut n = node(0, &p(), NodeConfig::default());
        n.repeated_broadcast(Value::from("a")).unwrap();
        n.instances[0].brb.entry_mut(NodeId(0)).ready.insert((NodeId(1), Value::from("junk")));
        let out = n.tick();
        let stamped = stamp(Round::new(0, 32), b"a", &p());
        assert!(out[0].1.brb.init.contains(&stamped));
        assert!(out[0].1.brb.ready.is_empty());
    }

    #[test]
    fn filler_covers_orphan_round() {
        let mut n = node(0, &p(), NodeConfig::default());
        n.instances[0].irc.cur[0] = Round::new(9, 32);
        let out = n.tick();
        assert!(out[0].1.brb.init.contains(&stamp(Round::new(9, 32), b"", &p())));
        assert!(n
            .take_events()
            .iter()
            .any(|e| matches!(e, NodeEvent::Broadcast { filler: true, .. })));
    }

    #[test]
    fn resync_after_repeated_stale_round() {
        let mut n = node(0, &p(), NodeConfig::default());
        n.instances[0].irc.cur[1] = Round::new(10, 32);
        let w = WireMessage {
            instance: 0,
            brb: BrbEntry::default(),
            irc: IrcWire { ack: true, seq: Round::new(8, 32), lbl: 0 },
        };
        for _ in 0..2 {
            n.on_message(NodeId(1), &w);
            assert_eq!(n.instances[0].irc.cur[1], Round::new(10, 32));
        }
        n.on_message(NodeId(1), &w);
        assert_eq!(n.instances[0].irc.cur[1], Round::new(8, 32));
        assert_eq!(n.instances[0].irc.fetch(NodeId(1)), Some(Round::new(8, 32)));
    }
}
