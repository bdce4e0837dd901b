//! Consistency predicates evaluated from the outside: each entry
//! conflict-free, own READYs justified, and in-flight payloads compatible
//! with what the receiver already holds. Thresholds are recomputed here from
//! `n` and `t` and never read from the object under test.

use std::collections::{BTreeMap, BTreeSet};

use crate::brb::{BrbEntry, BrbState, Pair};
use crate::params::{NodeId, Params, Value};

fn conflicting(set: &BTreeSet<Pair>) -> bool {
    let mut seen: BTreeMap<NodeId, &Value> = BTreeMap::new();
    for (k, v) in set {
        if let Some(prev) = seen.insert(*k, v) {
            if prev != v {
                return true;
            }
        }
    }
    false
}

fn count(brb: &BrbState, params: &Params, pick: impl Fn(&BrbEntry) -> &BTreeSet<Pair>, probe: &Pair) -> usize {
    params.nodes().filter(|l| pick(brb.entry(*l)).contains(probe)).count()
}

/// Per-entry INIT/ECHO/READY uniqueness and justified own READYs.
pub fn node_consistent(brb: &BrbState, params: &Params) -> bool {
    for l in params.nodes() {
        let e = brb.entry(l);
        if e.init.len() > 1 || conflicting(&e.echo) || conflicting(&e.ready) {
            return false;
        }
    }
    let me = brb.me();
    brb.entry(me).ready.iter().all(|pair| {
        let echoes = count(brb, params, |e| &e.echo, pair);
        let readies = count(brb, params, |e| &e.ready, pair);
        2 * echoes > params.n + params.t || readies > params.t
    })
}

/// True when merging `payload` into `view` would put two values for one
/// broadcaster into an ECHO or READY set.
pub fn payload_conflicts(payload: &BrbEntry, view: &BrbEntry) -> bool {
    let union = |a: &BTreeSet<Pair>, b: &BTreeSet<Pair>| a.union(b).cloned().collect::<BTreeSet<Pair>>();
    conflicting(&union(&payload.echo, &view.echo)) || conflicting(&union(&payload.ready, &view.ready))
}
