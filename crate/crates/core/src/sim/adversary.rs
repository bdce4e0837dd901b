//! Byzantine automata. Each one wraps an honest shadow node and rewrites or
//! suppresses its traffic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::brb::BrbEntry;
use crate::irc::{IrcWire, Round};
use crate::node::{stamp, NodeState, WireMessage};
use crate::params::{NodeId, Params, Value};

use super::World;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Different INIT values to two halves of the peers.
    EquivocateInit,
    /// READY pairs for a value nobody echoed.
    FakeReady(Value),
    /// Honest, plus acknowledgments sent before any request arrives.
    SpeculativeAck,
    /// Empty requests and no replies from the given step on.
    MuteAfter(u64),
    /// Silent from the given step on.
    CrashAt(u64),
    /// Random well-formed messages.
    ByzRandom,
}

impl Strategy {
    pub fn parse(s: &str) -> Option<Strategy> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a.trim(), Some(b.trim())),
            None => (s.trim(), None),
        };
        Some(match (name, arg) {
            ("equivocate-init", None) => Strategy::EquivocateInit,
            ("fake-ready", Some(v)) => Strategy::FakeReady(Value::from(v)),
            ("fake-ready", None) => Strategy::FakeReady(Value::from("forged")),
            ("speculative-ack", None) => Strategy::SpeculativeAck,
            ("mute-after", Some(s)) => Strategy::MuteAfter(s.parse().ok()?),
            ("crash-at", Some(s)) => Strategy::CrashAt(s.parse().ok()?),
            ("byz-random", None) => Strategy::ByzRandom,
            _ => return None,
        })
    }

    pub fn mute_from(&self) -> Option<u64> {
        match self {
            Strategy::MuteAfter(s) | Strategy::CrashAt(s) => Some(*s),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::EquivocateInit => f.write_str("equivocate-init"),
            Strategy::FakeReady(v) => write!(f, "fake-ready:{}", String::from_utf8_lossy(v.as_bytes())),
            Strategy::SpeculativeAck => f.write_str("speculative-ack"),
            Strategy::MuteAfter(s) => write!(f, "mute-after:{s}"),
            Strategy::CrashAt(s) => write!(f, "crash-at:{s}"),
            Strategy::ByzRandom => f.write_str("byz-random"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdversarySpec {
    pub nodes: BTreeMap<NodeId, Strategy>,
}

impl AdversarySpec {
    pub fn strategy(&self, i: NodeId) -> Option<&Strategy> {
        self.nodes.get(&i)
    }

    pub fn corrupt(&self) -> BTreeSet<NodeId> {
        self.nodes.keys().copied().collect()
    }

    pub fn check(&self, params: &Params) -> Result<(), String> {
        if self.nodes.len() > params.t {
            return Err(format!("{} Byzantine nodes but t = {}", self.nodes.len(), params.t));
        }
        if let Some(i) = self.nodes.keys().find(|i| i.0 >= params.n) {
            return Err(format!("Byzantine node {i} outside 0..{}", params.n));
        }
        Ok(())
    }
}

/// What a speculative acknowledger guesses about each receiver; the
/// simulator hands over the exact values, the strongest possible guess.
pub struct Peek {
    /// `[instance][receiver] = (receiver's own round, receiver's label for us)`
    per: Vec<Vec<(Round, u32)>>,
}

impl Peek {
    pub fn capture(world: &World, byz: NodeId) -> Peek {
        let needed = matches!(world.cfg.adversary.strategy(byz), Some(Strategy::SpeculativeAck));
        if !needed {
            return Peek { per: Vec::new() };
        }
        let per = (0..world.cfg.params.delta)
            .map(|a| {
                world
                    .actors
                    .iter()
                    .map(|act| {
                        let irc = &act.node.instances[a].irc;
                        (irc.own_round(), irc.lbl[byz.0])
                    })
                    .collect()
            })
            .collect();
        Peek { per }
    }
}

pub struct ByzState {
    pub strategy: Strategy,
    rng: ChaCha8Rng,
}

impl ByzState {
    pub fn new(strategy: Strategy, seed: u64) -> ByzState {
        ByzState { strategy, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn crashed(&self, step: u64) -> bool {
        matches!(self.strategy, Strategy::CrashAt(s) if step >= s)
    }

    fn mute(&self, step: u64) -> bool {
        matches!(self.strategy, Strategy::MuteAfter(s) | Strategy::CrashAt(s) if step >= s)
    }

    pub fn tick(&mut self, shadow: &mut NodeState, step: u64, peek: &Peek) -> Vec<(NodeId, WireMessage)> {
        if self.crashed(step) {
            return Vec::new();
        }
        let params = shadow.params().clone();
        let me = shadow.me();
        let gated = shadow.config().gated;
        if self.mute(step) {
            let mut out = Vec::new();
            for (a, inst) in shadow.instances.iter().enumerate() {
                for j in params.nodes().filter(|j| *j != me) {
                    out.push((j, WireMessage { instance: a as u32, brb: BrbEntry::default(), irc: inst.irc.tx(j) }));
                }
            }
            return out;
        }
        let mut out = shadow.tick();
        match &self.strategy {
            Strategy::EquivocateInit => {
                let peers: Vec<NodeId> = params.nodes().filter(|j| *j != me).collect();
                let split = peers.len().div_ceil(2);
                for (j, msg) in &mut out {
                    let a = msg.instance as usize;
                    let r = shadow.instances[a].irc.own_round();
                    let side: &[u8] = if peers[..split].contains(j) { b"eq-a" } else { b"eq-b" };
                    let v = if gated { stamp(r, side, &params) } else { Value::new(side.to_vec()) };
                    if gated && r.is_sentinel() {
                        continue;
                    }
                    msg.brb.init = BTreeSet::from([v.clone()]);
                    msg.brb.echo.retain(|(k, _)| *k != me);
                    msg.brb.ready.retain(|(k, _)| *k != me);
                    if *j == peers[0] {
                        msg.brb.echo.insert((me, v.clone()));
                        msg.brb.ready.insert((me, v));
                    }
                }
            }
            Strategy::FakeReady(v) => {
                for (_, msg) in &mut out {
                    let a = msg.instance as usize;
                    let irc = &shadow.instances[a].irc;
                    msg.brb.ready = params
                        .nodes()
                        .filter(|k| !gated || !irc.cur[k.0].is_sentinel())
                        .map(|k| {
                            let fake = if gated { stamp(irc.cur[k.0], v.as_bytes(), &params) } else { v.clone() };
                            (k, fake)
                        })
                        .collect();
                }
            }
            Strategy::SpeculativeAck => {
                for (a, row) in peek.per.iter().enumerate() {
                    for j in params.nodes().filter(|j| *j != me) {
                        let (seq, lbl) = row[j.0];
                        let irc = IrcWire { ack: false, seq, lbl };
                        out.push((j, WireMessage { instance: a as u32, brb: BrbEntry::default(), irc }));
                    }
                }
            }
            Strategy::ByzRandom => {
                for (j, msg) in &mut out {
                    let a = msg.instance as usize;
                    *msg = self.random_message(shadow, a, *j, &params);
                }
            }
            Strategy::MuteAfter(_) | Strategy::CrashAt(_) => {}
        }
        out
    }

    fn random_value(&mut self, shadow: &NodeState, a: usize, k: NodeId, params: &Params) -> Value {
        let len = self.rng.gen_range(6..=8);
        let bytes: Vec<u8> = (0..len).map(|_| self.rng.gen()).collect();
        let cur = shadow.instances[a].irc.cur[k.0];
        if shadow.config().gated && !cur.is_sentinel() && self.rng.gen_bool(0.5) {
            stamp(cur, &bytes[4..], params)
        } else {
            Value::new(bytes)
        }
    }

    fn random_message(&mut self, shadow: &NodeState, a: usize, _to: NodeId, params: &Params) -> WireMessage {
        let me = shadow.me();
        let mut brb = BrbEntry::default();
        if self.rng.gen_bool(0.5) {
            brb.init.insert(self.random_value(shadow, a, me, params));
        }
        for _ in 0..self.rng.gen_range(0..=params.n) {
            let k = NodeId(self.rng.gen_range(0..params.n));
            let v = self.random_value(shadow, a, k, params);
            brb.echo.insert((k, v));
        }
        for _ in 0..self.rng.gen_range(0..=params.n) {
            let k = NodeId(self.rng.gen_range(0..params.n));
            let v = self.random_value(shadow, a, k, params);
            brb.ready.insert((k, v));
        }
        let b = params.big_b;
        let irc = IrcWire {
            ack: self.rng.gen_bool(0.5),
            seq: Round::new(self.rng.gen_range(-1..b as i64), b),
            lbl: self.rng.gen_range(0..=b),
        };
        WireMessage { instance: a as u32, brb, irc }
    }

    pub fn on_message(
        &mut self,
        shadow: &mut NodeState,
        from: NodeId,
        msg: &WireMessage,
        step: u64,
    ) -> Option<(NodeId, WireMessage)> {
        if self.mute(step) {
            return None;
        }
        shadow.on_message(from, msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_roundtrip() {
        for s in [
            Strategy::EquivocateInit,
            Strategy::FakeReady(Value::from("zz")),
            Strategy::SpeculativeAck,
            Strategy::MuteAfter(40),
            Strategy::CrashAt(7),
            Strategy::ByzRandom,
        ] {
            assert_eq!(Strategy::parse(&s.to_string()), Some(s));
        }
        assert_eq!(Strategy::parse("mute-after:x"), None);
        assert_eq!(Strategy::parse("nonsense"), None);
    }

    #[test]
    fn too_many_byzantine_nodes() {
        let mut spec = AdversarySpec::default();
        spec.nodes.insert(NodeId(1), Strategy::ByzRandom);
        assert!(spec.check(&Params::default()).is_ok());
        spec.nodes.insert(NodeId(2), Strategy::ByzRandom);
        assert!(spec.check(&Params::default()).is_err());
    }

    #[test]
    fn equivocation_splits_peers() {
        let params = Params::default();
        let mut shadow = NodeState::new(NodeId(3), &params, Default::default());
        shadow.repeated_broadcast(Value::from("x")).unwrap();
        let mut byz = ByzState::new(Strategy::EquivocateInit, 1);
        let out = byz.tick(&mut shadow, 0, &Peek { per: Vec::new() });
        let inits: BTreeMap<NodeId, BTreeSet<Value>> =
            out.iter().filter(|(_, m)| m.instance == 0).map(|(j, m)| (*j, m.brb.init.clone())).collect();
        assert_eq!(inits[&NodeId(0)], inits[&NodeId(1)]);
        assert_ne!(inits[&NodeId(0)], inits[&NodeId(2)]);
    }

    #[test]
    fn crashed_node_is_silent() {
        let params = Params::default();
        let mut shadow = NodeState::new(NodeId(3), &params, Default::default());
        let mut byz = ByzState::new(Strategy::CrashAt(5), 1);
        let peek = Peek { per: Vec::new() };
        assert!(!byz.tick(&mut shadow, 4, &peek).is_empty());
        assert!(byz.tick(&mut shadow, 5, &peek).is_empty());
    }
}
