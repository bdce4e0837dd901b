//! Deterministic world: bounded lossy channels, a round-based fair
//! scheduler, Byzantine automata, transient corruption and bounded message
//! lifetime enforcement.
//!
//! Each scheduling round is a shuffled list holding one tick per live node
//! and `deliveries_per_round` delivery attempts per channel. Every executed
//! tick or delivery is one step.

pub mod adversary;
pub mod baseline_run;
pub mod corrupt;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::irc::{behind, Round};
use crate::node::{encode, NodeConfig, NodeEvent, NodeState, WireMessage};
use crate::params::{Mutation, NodeId, Params, Value};
use crate::trace::{DropReason, Trace, TraceEvent};
use crate::verify::consistency;

pub use adversary::{AdversarySpec, Strategy};
pub use corrupt::{CorruptionSpec, Scope};

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub p_loss: f64,
    pub p_dup: f64,
    pub deliveries_per_round: usize,
    pub horizon: u64,
    /// Purge messages older than lambda rounds of their sender.
    pub bml: bool,
    /// Round-trip fairness: when an honest node's excess count for an
    /// honest peer reaches this value, the pair's channels get extra
    /// deliveries that round. 0 disables.
    pub rt_guard: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { p_loss: 0.05, p_dup: 0.05, deliveries_per_round: 2, horizon: 50_000, bml: true, rt_guard: 6 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Workload {
    /// Values each node hands to its broadcast queue at start; in irc-only
    /// runs, increments per instance.
    pub broadcasts: usize,
    pub value_len: usize,
}

impl Default for Workload {
    fn default() -> Self {
        Workload { broadcasts: 4, value_len: 8 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorldConfig {
    pub params: Params,
    pub node: NodeConfig,
    pub network: NetworkConfig,
    pub adversary: AdversarySpec,
    pub transient: Option<CorruptionSpec>,
    pub workload: Workload,
    /// End the run once every expected delivery happened and every counter
    /// is free again.
    pub stop_when_done: bool,
}

/// The value node `i` broadcasts as its `idx`-th workload item.
pub fn workload_value(i: NodeId, idx: usize, len: usize) -> Value {
    let mut s = format!("p{}.{}.", i.0, idx).into_bytes();
    while s.len() < len {
        s.push(b'a' + (s.len() % 26) as u8);
    }
    Value::new(s)
}

#[derive(Clone, Debug)]
pub struct InFlight {
    pub msg: WireMessage,
    /// Sender's counter for the message's instance at send time.
    pub origin: Round,
}

#[derive(Clone, Debug, Default)]
pub struct Channel {
    pub in_flight: Vec<InFlight>,
}

pub struct Actor {
    pub node: NodeState,
    pub byz: Option<adversary::ByzState>,
}

impl Actor {
    pub fn is_honest(&self) -> bool {
        self.byz.is_none()
    }
}

#[derive(Clone, Copy)]
enum Action {
    Tick(usize),
    Deliver(usize),
}

pub fn digest(msg: &WireMessage) -> String {
    let h = Sha256::digest(encode(msg));
    hex::encode(&h[..4])
}

pub struct World {
    pub cfg: WorldConfig,
    pub seed: u64,
    pub actors: Vec<Actor>,
    pub channels: Vec<Channel>,
    pub step: u64,
    pub round: u64,
    pub trace: Trace,
    sched_rng: ChaCha8Rng,
    net_rng: ChaCha8Rng,
    fault_rng: ChaCha8Rng,
    injected: bool,
    bad_nodes: BTreeSet<NodeId>,
    /// Thresholds the consistency oracle judges by, whatever the build.
    oracle_params: Params,
    expected: usize,
    delivered: Vec<BTreeSet<(usize, NodeId, Value)>>,
    stopped: bool,
}

impl World {
    pub fn new(cfg: WorldConfig, seed: u64) -> World {
        let params = cfg.params.clone();
        let n = params.n;
        let mut actors = Vec::with_capacity(n);
        for i in params.nodes() {
            let mut node = NodeState::new(i, &params, cfg.node.clone());
            let byz = cfg
                .adversary
                .strategy(i)
                .map(|s| adversary::ByzState::new(s.clone(), seed ^ (0xB12 + i.0 as u64)));
            for idx in 0..cfg.workload.broadcasts {
                let _ = node.repeated_broadcast(workload_value(i, idx, cfg.workload.value_len));
            }
            actors.push(Actor { node, byz });
        }
        let honest: Vec<NodeId> = params.nodes().filter(|i| actors[i.0].is_honest()).collect();
        let per_sender = if cfg.node.gated { cfg.workload.broadcasts } else { cfg.workload.broadcasts.min(params.delta) };
        let expected = if cfg.node.irc_only { 0 } else { honest.len() * per_sender };
        let mut world = World {
            oracle_params: Params { mutation: Mutation::None, ..params.clone() },
            cfg,
            seed,
            actors,
            channels: vec![Channel::default(); n * n],
            step: 0,
            round: 0,
            trace: Trace::default(),
            sched_rng: ChaCha8Rng::seed_from_u64(seed),
            net_rng: ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 1),
            fault_rng: ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0xC2B2_AE3D_27D4_EB4F) ^ 2),
            injected: false,
            bad_nodes: BTreeSet::new(),
            expected,
            delivered: vec![BTreeSet::new(); n],
            stopped: false,
        };
        world.drain_all_events();
        world
    }

    pub fn params(&self) -> &Params {
        &self.cfg.params
    }

    pub fn honest(&self) -> Vec<NodeId> {
        self.cfg.params.nodes().filter(|i| self.actors[i.0].is_honest()).collect()
    }

    fn channel_index(&self, from: NodeId, to: NodeId) -> usize {
        from.0 * self.cfg.params.n + to.0
    }

    pub fn channel(&self, from: NodeId, to: NodeId) -> &Channel {
        &self.channels[self.channel_index(from, to)]
    }

    pub fn channel_mut(&mut self, from: NodeId, to: NodeId) -> &mut Channel {
        let i = self.channel_index(from, to);
        &mut self.channels[i]
    }

    fn drain_events(&mut self, i: NodeId) {
        if !self.actors[i.0].is_honest() {
            self.actors[i.0].node.take_events();
            return;
        }
        for e in self.actors[i.0].node.take_events() {
            if let NodeEvent::Deliver { inst, from, value, .. } = &e {
                if self.actors[from.0].is_honest() {
                    self.delivered[i.0].insert((*inst, *from, value.clone()));
                }
            }
            self.trace.push(self.step, Some(i), TraceEvent::Node(e));
        }
    }

    fn drain_all_events(&mut self) {
        for i in self.cfg.params.nodes() {
            self.drain_events(i);
        }
    }

    /// Enqueues `msg`, applying loss, duplication and the capacity bound.
    pub fn send(&mut self, from: NodeId, to: NodeId, msg: WireMessage) {
        let inst = msg.instance;
        let p_loss = self.cfg.network.p_loss;
        let p_dup = self.cfg.network.p_dup;
        if p_loss > 0.0 && self.net_rng.gen_bool(p_loss.min(1.0)) {
            self.trace.push(self.step, None, TraceEvent::Drop { from, to, inst, why: DropReason::Loss });
            return;
        }
        let copies = if p_dup > 0.0 && self.net_rng.gen_bool(p_dup.min(1.0)) {
            self.trace.push(self.step, None, TraceEvent::Dup { from, to, inst });
            2
        } else {
            1
        };
        let origin = self.actors[from.0]
            .node
            .instances
            .get(inst as usize)
            .map_or(Round::SENTINEL, |x| x.irc.own_round());
        let cap = self.cfg.params.capacity;
        for _ in 0..copies {
            let idx = self.channel_index(from, to);
            if self.channels[idx].in_flight.len() >= cap {
                let victim = self.net_rng.gen_range(0..self.channels[idx].in_flight.len());
                let dropped = self.channels[idx].in_flight.swap_remove(victim);
                let why = DropReason::Overflow;
                self.trace.push(self.step, None, TraceEvent::Drop { from, to, inst: dropped.msg.instance, why });
            }
            self.channels[idx].in_flight.push(InFlight { msg: msg.clone(), origin });
        }
    }

    fn tick(&mut self, i: NodeId) {
        self.trace.push(self.step, Some(i), TraceEvent::Tick);
        let out = if self.actors[i.0].is_honest() {
            let out = self.actors[i.0].node.tick();
            let bad = self.actors[i.0]
                .node
                .instances
                .iter()
                .any(|inst| !consistency::node_consistent(&inst.brb, &self.oracle_params));
            if bad {
                self.bad_nodes.insert(i);
            }
            out
        } else {
            let peek = adversary::Peek::capture(self, i);
            let actor = &mut self.actors[i.0];
            let byz = actor.byz.as_mut().expect("byzantine actor");
            byz.tick(&mut actor.node, self.step, &peek)
        };
        self.drain_events(i);
        for (to, msg) in out {
            self.send(i, to, msg);
        }
    }

    fn deliver(&mut self, idx: usize) -> bool {
        let len = self.channels[idx].in_flight.len();
        if len == 0 {
            return false;
        }
        let n = self.cfg.params.n;
        let (from, to) = (NodeId(idx / n), NodeId(idx % n));
        let pick = self.net_rng.gen_range(0..len);
        let InFlight { msg, .. } = self.channels[idx].in_flight.swap_remove(pick);
        self.trace.push(self.step, Some(to), TraceEvent::Recv { from, inst: msg.instance, digest: digest(&msg) });
        let reply = {
            let actor = &mut self.actors[to.0];
            match actor.byz.as_mut() {
                None => actor.node.on_message(from, &msg),
                Some(byz) => byz.on_message(&mut actor.node, from, &msg, self.step),
            }
        };
        self.drain_events(to);
        if let Some((dest, r)) = reply {
            self.send(to, dest, r);
        }
        true
    }

    fn alive(&self, i: NodeId) -> bool {
        match &self.actors[i.0].byz {
            None => true,
            Some(b) => !b.crashed(self.step),
        }
    }

    fn maybe_inject(&mut self) {
        if self.injected {
            return;
        }
        if let Some(spec) = self.cfg.transient.clone() {
            if self.step >= spec.at_step {
                self.injected = true;
                let mut rng = self.fault_rng.clone();
                corrupt::inject(self, &spec, &mut rng);
                self.fault_rng = rng;
                self.trace.push(self.step, None, TraceEvent::Corrupt { scope: spec.scope_string() });
            }
        }
    }

    fn enforce_bml(&mut self) -> usize {
        let mut purged = 0;
        let n = self.cfg.params.n;
        for from in self.honest() {
            for to in 0..n {
                let idx = self.channel_index(from, NodeId(to));
                let mut kept = Vec::with_capacity(self.channels[idx].in_flight.len());
                for m in std::mem::take(&mut self.channels[idx].in_flight) {
                    let now = self.actors[from.0]
                        .node
                        .instances
                        .get(m.msg.instance as usize)
                        .map_or(Round::SENTINEL, |x| x.irc.own_round());
                    if behind(1, m.origin, now, &self.cfg.params) {
                        kept.push(m);
                    } else {
                        purged += 1;
                        self.trace.push(self.step, None, TraceEvent::Drop {
                            from,
                            to: NodeId(to),
                            inst: m.msg.instance,
                            why: DropReason::Bml,
                        });
                    }
                }
                self.channels[idx].in_flight = kept;
            }
        }
        purged
    }

    /// In-flight messages between honest nodes whose admissible pairs
    /// conflict with themselves or with the receiver's view of the sender.
    pub fn channel_conflicts(&self) -> u64 {
        let honest = self.honest();
        let mut bad = 0;
        for &from in &honest {
            for &to in &honest {
                if from == to {
                    continue;
                }
                let receiver = &self.actors[to.0].node;
                for m in &self.channel(from, to).in_flight {
                    let a = m.msg.instance as usize;
                    if a >= receiver.instances.len() {
                        continue;
                    }
                    let admitted = receiver.admissible(a, from, &m.msg.brb);
                    let view = receiver.instances[a].brb.entry(from);
                    if consistency::payload_conflicts(&admitted, view) {
                        bad += 1;
                    }
                }
            }
        }
        bad
    }

    fn done(&self) -> bool {
        let honest = self.honest();
        if self.cfg.node.irc_only {
            let Some(budget) = self.cfg.node.increments else { return false };
            return honest.iter().all(|i| {
                let node = &self.actors[i.0].node;
                (0..self.cfg.params.delta).all(|a| node.instances[a].made >= budget && node.reported_enabled(a))
            });
        }
        let all_delivered = honest.iter().all(|i| self.delivered[i.0].len() >= self.expected);
        if !all_delivered {
            return false;
        }
        if !self.cfg.node.gated {
            return true;
        }
        honest.iter().all(|i| {
            let node = &self.actors[i.0].node;
            node.pending.is_empty()
                && (0..self.cfg.params.delta).all(|a| node.reported_enabled(a))
        })
    }

    /// Runs one scheduling round. Returns false once the run is over.
    pub fn run_round(&mut self) -> bool {
        if self.stopped {
            return false;
        }
        let n = self.cfg.params.n;
        let mut actions: Vec<Action> = (0..n).filter(|i| self.alive(NodeId(*i))).map(Action::Tick).collect();
        for c in 0..n * n {
            if c / n != c % n {
                for _ in 0..self.cfg.network.deliveries_per_round {
                    actions.push(Action::Deliver(c));
                }
            }
        }
        actions.extend(self.lagging_channels().into_iter().flat_map(|c| std::iter::repeat_n(Action::Deliver(c), self.cfg.params.capacity)));
        actions.shuffle(&mut self.sched_rng);
        for act in actions {
            if self.step >= self.cfg.network.horizon {
                break;
            }
            self.maybe_inject();
            let executed = match act {
                Action::Tick(i) => {
                    if self.alive(NodeId(i)) {
                        self.tick(NodeId(i));
                        true
                    } else {
                        false
                    }
                }
                Action::Deliver(c) => self.deliver(c),
            };
            if executed {
                self.step += 1;
            }
        }
        if self.cfg.network.bml {
            self.enforce_bml();
        }
        let bad_channels = self.channel_conflicts();
        let bad_nodes = std::mem::take(&mut self.bad_nodes);
        self.trace.push(self.step, None, TraceEvent::Snapshot { round: self.round, bad_nodes, bad_channels });
        self.round += 1;
        if self.cfg.stop_when_done && self.done() {
            self.finish("done");
            return false;
        }
        if self.step >= self.cfg.network.horizon {
            self.finish("horizon");
            return false;
        }
        true
    }

    /// Channels between honest pairs whose detector count is drifting
    /// towards a suspicion.
    fn lagging_channels(&self) -> BTreeSet<usize> {
        let guard = self.cfg.network.rt_guard;
        let mut out = BTreeSet::new();
        if guard == 0 || self.cfg.node.trust_all {
            return out;
        }
        let n = self.cfg.params.n;
        let honest = self.honest();
        for &i in &honest {
            for inst in &self.actors[i.0].node.instances {
                for &j in honest.iter().filter(|j| **j != i) {
                    if inst.md.excess(j, &self.cfg.params) >= guard {
                        out.insert(i.0 * n + j.0);
                        out.insert(j.0 * n + i.0);
                    }
                }
            }
        }
        out
    }

    fn finish(&mut self, reason: &str) {
        self.stopped = true;
        self.trace.push(self.step, None, TraceEvent::Stop { reason: reason.to_string() });
    }

    pub fn run(&mut self) {
        self.maybe_inject();
        while self.run_round() {}
    }

    /// Per honest node, the `(instance, broadcaster, value)` deliveries from
    /// honest broadcasters.
    pub fn delivered(&self) -> &[BTreeSet<(usize, NodeId, Value)>] {
        &self.delivered
    }

    pub fn adversary_nodes(&self) -> BTreeMap<NodeId, Strategy> {
        self.cfg.adversary.nodes.clone()
    }
}
