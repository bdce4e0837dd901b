//! Transient faults: overwrite honest state and channel contents with
//! random values of the right type. Transition functions stay untouched.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::brb::BrbEntry;
use crate::irc::{IrcWire, Round};
use crate::node::{stamp, WireMessage};
use crate::params::{NodeId, Params, Value};

use super::{InFlight, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scope {
    Brb,
    Irc,
    Muteness,
    Channels,
    /// Delivery bookkeeping outside the BRB object.
    Node,
}

impl Scope {
    pub const ALL: [Scope; 5] = [Scope::Brb, Scope::Irc, Scope::Muteness, Scope::Channels, Scope::Node];

    pub fn name(self) -> &'static str {
        match self {
            Scope::Brb => "brb",
            Scope::Irc => "irc",
            Scope::Muteness => "muteness",
            Scope::Channels => "channels",
            Scope::Node => "node",
        }
    }

    pub fn parse(s: &str) -> Option<Scope> {
        Scope::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorruptionSpec {
    pub at_step: u64,
    pub scope: BTreeSet<Scope>,
    /// Honest nodes to corrupt; `None` means all of them.
    pub nodes: Option<BTreeSet<NodeId>>,
    /// Instances to corrupt; `None` means all of them.
    pub instances: Option<BTreeSet<usize>>,
}

impl CorruptionSpec {
    pub fn full(at_step: u64) -> CorruptionSpec {
        CorruptionSpec { at_step, scope: Scope::ALL.into_iter().collect(), nodes: None, instances: None }
    }

    pub fn scope_string(&self) -> String {
        let s: Vec<&str> = self.scope.iter().map(|x| x.name()).collect();
        if s.is_empty() {
            "none".into()
        } else {
            s.join(";")
        }
    }
}

/// Draws from a small pool so that random pairs collide and build fake
/// quorums often.
fn value(rng: &mut ChaCha8Rng, params: &Params) -> Value {
    let round = Round::new(rng.gen_range(0..params.big_b as i64), params.big_b);
    let body: Vec<u8> = (0..rng.gen_range(0..3)).map(|_| b'a' + rng.gen_range(0..3u8)).collect();
    if rng.gen_bool(0.7) {
        stamp(round, &body, params)
    } else {
        Value::new(body)
    }
}

fn round(rng: &mut ChaCha8Rng, params: &Params) -> Round {
    Round::new(rng.gen_range(-1..params.big_b as i64), params.big_b)
}

fn node_id(rng: &mut ChaCha8Rng, params: &Params) -> NodeId {
    NodeId(rng.gen_range(0..params.n))
}

pub fn entry(rng: &mut ChaCha8Rng, params: &Params) -> BrbEntry {
    let mut e = BrbEntry::default();
    for _ in 0..rng.gen_range(0..=2) {
        e.init.insert(value(rng, params));
    }
    for _ in 0..rng.gen_range(0..=params.n) {
        e.echo.insert((node_id(rng, params), value(rng, params)));
    }
    for _ in 0..rng.gen_range(0..=params.n) {
        e.ready.insert((node_id(rng, params), value(rng, params)));
    }
    e
}

pub fn message(rng: &mut ChaCha8Rng, params: &Params, instance: usize) -> WireMessage {
    let mut brb = entry(rng, params);
    // Channel payloads must still pass the size checks to matter.
    while brb.init.len() > 1 {
        let v = brb.init.iter().next().cloned().expect("non-empty");
        brb.init.remove(&v);
    }
    let irc = IrcWire { ack: rng.gen_bool(0.5), seq: round(rng, params), lbl: rng.gen_range(0..=params.big_b) };
    WireMessage { instance: instance as u32, brb, irc }
}

pub fn inject(world: &mut World, spec: &CorruptionSpec, rng: &mut ChaCha8Rng) {
    let params = world.cfg.params.clone();
    let honest = world.honest();
    let targets: Vec<NodeId> = honest.iter().copied().filter(|i| spec.nodes.as_ref().is_none_or(|s| s.contains(i))).collect();
    let instances: Vec<usize> =
        (0..params.delta).filter(|a| spec.instances.as_ref().is_none_or(|s| s.contains(a))).collect();
    let has = |s: Scope| spec.scope.contains(&s);
    for &i in &targets {
        let node = &mut world.actors[i.0].node;
        for &a in &instances {
            let inst = &mut node.instances[a];
            if has(Scope::Brb) {
                for k in params.nodes() {
                    *inst.brb.entry_mut(k) = entry(rng, &params);
                    inst.brb.set_was_delivered(k, rng.gen_bool(0.5));
                }
            }
            if has(Scope::Irc) {
                for k in 0..params.n {
                    inst.irc.cur[k] = round(rng, &params);
                    inst.irc.nxt[k] = round(rng, &params);
                    inst.irc.lbl[k] = rng.gen_range(0..=params.big_b);
                }
            }
            if has(Scope::Muteness) {
                for row in inst.md.rt.iter_mut() {
                    for c in row.iter_mut() {
                        *c = rng.gen_range(0..=params.big_b);
                    }
                }
            }
            if has(Scope::Node) {
                for d in inst.app_delivered.iter_mut() {
                    *d = rng.gen_bool(0.5);
                }
                for h in inst.held.iter_mut() {
                    *h = rng.gen_bool(0.5).then(|| (round(rng, &params), value(rng, &params)));
                }
                inst.outgoing = if rng.gen_bool(0.5) {
                    Some((round(rng, &params), value(rng, &params)))
                } else {
                    None
                };
            }
        }
        if has(Scope::Node) && spec.instances.is_none() {
            for f in node.fifo_next.iter_mut() {
                *f = rng.gen_range(0..params.delta);
            }
            node.next_label = rng.gen_range(0..params.delta);
        }
    }
    if has(Scope::Channels) && !instances.is_empty() {
        for from in params.nodes() {
            for to in params.nodes().filter(|to| *to != from) {
                if !targets.contains(&from) && !targets.contains(&to) {
                    continue;
                }
                let ch = world.channel_mut(from, to);
                ch.in_flight.retain(|m| !instances.contains(&(m.msg.instance as usize)));
                let room = params.capacity.saturating_sub(ch.in_flight.len());
                for _ in 0..rng.gen_range(0..=room) {
                    let a = instances[rng.gen_range(0..instances.len())];
                    let msg = message(rng, &params, a);
                    let origin = round(rng, &params);
                    world.channel_mut(from, to).in_flight.push(InFlight { msg, origin });
                }
            }
        }
    }
}
