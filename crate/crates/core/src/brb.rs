//! The self-stabilizing BRB object.
//!
//! One object hosts `n` broadcaster slots. `entry(me)` is what this node
//! disseminates (its INIT, the ECHOes it sent and the READYs it sent);
//! `entry(j)` for `j != me` is the union of everything received from `p_j`
//! since slot `j` was last recycled. Delivery is pull-based: the caller
//! invokes [`BrbState::deliver`], which consults the recycling gate only once
//! a READY quorum exists.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::params::{NodeId, Params, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BrbMsgKind {
    Init,
    Echo,
    Ready,
}

impl BrbMsgKind {
    pub const ALL: [BrbMsgKind; 3] = [BrbMsgKind::Init, BrbMsgKind::Echo, BrbMsgKind::Ready];
}

/// `(broadcaster, value)` record carried in ECHO and READY sets.
pub type Pair = (NodeId, Value);

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct BrbEntry {
    pub init: BTreeSet<Value>,
    pub echo: BTreeSet<Pair>,
    pub ready: BTreeSet<Pair>,
}

impl BrbEntry {
    pub fn is_empty(&self) -> bool {
        self.init.is_empty() && self.echo.is_empty() && self.ready.is_empty()
    }

    pub fn pairs(&self, kind: BrbMsgKind) -> Option<&BTreeSet<Pair>> {
        match kind {
            BrbMsgKind::Init => None,
            BrbMsgKind::Echo => Some(&self.echo),
            BrbMsgKind::Ready => Some(&self.ready),
        }
    }

    fn pairs_mut(&mut self, kind: BrbMsgKind) -> Option<&mut BTreeSet<Pair>> {
        match kind {
            BrbMsgKind::Init => None,
            BrbMsgKind::Echo => Some(&mut self.echo),
            BrbMsgKind::Ready => Some(&mut self.ready),
        }
    }

    /// At most one INIT value, and no broadcaster with two different values
    /// in the ECHO or READY set.
    pub fn is_conflict_free(&self) -> bool {
        self.init.len() <= 1 && !has_conflict(&self.echo) && !has_conflict(&self.ready)
    }

    pub fn has_pair_for(&self, kind: BrbMsgKind, k: NodeId) -> bool {
        self.pairs(kind)
            .is_some_and(|set| set.range(lower(k)..).next().is_some_and(|(b, _)| *b == k))
    }
}

fn lower(k: NodeId) -> Pair {
    (k, Value::default())
}

/// True when some broadcaster appears with two different values.
pub fn has_conflict(set: &BTreeSet<Pair>) -> bool {
    set.iter().zip(set.iter().skip(1)).any(|((a, _), (b, _))| a == b)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BrbError {
    #[error("payload from self")]
    SelfMerge,
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("payload carries {0} INIT values")]
    InitOverflow(usize),
    #[error("payload carries {count} {kind:?} pairs, cap is {cap}")]
    PairOverflow { kind: BrbMsgKind, count: usize, cap: usize },
    #[error("value of {len} bytes exceeds {max}")]
    ValueTooLong { len: usize, max: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BrbState {
    me: NodeId,
    params: Params,
    entries: Vec<BrbEntry>,
    was_delivered: Vec<bool>,
    double_quorums: u64,
}

impl BrbState {
    pub fn new(me: NodeId, params: &Params) -> Self {
        BrbState {
            me,
            params: params.clone(),
            entries: vec![BrbEntry::default(); params.n],
            was_delivered: vec![false; params.n],
            double_quorums: 0,
        }
    }

    pub fn me(&self) -> NodeId {
        self.me
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn entry(&self, k: NodeId) -> &BrbEntry {
        &self.entries[k.0]
    }

    /// Raw access for fault injection and tests.
    pub fn entry_mut(&mut self, k: NodeId) -> &mut BrbEntry {
        &mut self.entries[k.0]
    }

    pub fn set_was_delivered(&mut self, k: NodeId, flag: bool) {
        self.was_delivered[k.0] = flag;
    }

    /// Number of times two values reached the delivery quorum for one slot.
    /// Only reachable from a corrupted state.
    pub fn double_quorums(&self) -> u64 {
        self.double_quorums
    }

    pub fn recycle(&mut self, k: NodeId) {
        self.entries[k.0] = BrbEntry::default();
        self.was_delivered[k.0] = false;
    }

    /// Removes every ECHO/READY pair about broadcaster `k` from all entries.
    pub fn purge_broadcaster(&mut self, k: NodeId) {
        for e in &mut self.entries {
            e.echo.retain(|(b, _)| *b != k);
            e.ready.retain(|(b, _)| *b != k);
        }
    }

    pub fn broadcast(&mut self, v: Value, tx_available: bool) -> bool {
        if !tx_available {
            return false;
        }
        self.recycle(self.me);
        self.entries[self.me.0].init = BTreeSet::from([v]);
        true
    }

    /// Checks that a payload from a peer respects the size caps.
    pub fn check_payload(&self, payload: &BrbEntry) -> Result<(), BrbError> {
        if payload.init.len() > 1 {
            return Err(BrbError::InitOverflow(payload.init.len()));
        }
        let cap = 3 * self.params.n;
        let max = self.params.max_value_len;
        for v in &payload.init {
            if v.len() > max {
                return Err(BrbError::ValueTooLong { len: v.len(), max });
            }
        }
        for kind in [BrbMsgKind::Echo, BrbMsgKind::Ready] {
            let set = payload.pairs(kind).expect("pair kind");
            if set.len() > cap {
                return Err(BrbError::PairOverflow { kind, count: set.len(), cap });
            }
            for (k, v) in set {
                if k.0 >= self.params.n {
                    return Err(BrbError::UnknownNode(k.0));
                }
                if v.len() > max {
                    return Err(BrbError::ValueTooLong { len: v.len(), max });
                }
            }
        }
        Ok(())
    }

    pub fn merge_incoming(&mut self, j: NodeId, payload: &BrbEntry) -> Result<(), BrbError> {
        if j == self.me {
            return Err(BrbError::SelfMerge);
        }
        if j.0 >= self.params.n {
            return Err(BrbError::UnknownNode(j.0));
        }
        self.check_payload(payload)?;
        let entry = &mut self.entries[j.0];
        let merged_init = entry.init.union(&payload.init).count();
        if merged_init <= 1 {
            entry.init.extend(payload.init.iter().cloned());
        }
        entry.echo.extend(payload.echo.iter().cloned());
        entry.ready.extend(payload.ready.iter().cloned());
        Ok(())
    }

    pub fn echo_support(&self, k: NodeId, m: &Value) -> usize {
        self.support(BrbMsgKind::Echo, k, m)
    }

    pub fn ready_support(&self, k: NodeId, m: &Value) -> usize {
        self.support(BrbMsgKind::Ready, k, m)
    }

    fn support(&self, kind: BrbMsgKind, k: NodeId, m: &Value) -> usize {
        let probe = (k, m.clone());
        self.entries
            .iter()
            .filter(|e| e.pairs(kind).is_some_and(|s| s.contains(&probe)))
            .count()
    }

    /// Distinct values that some entry pairs with broadcaster `k`.
    fn candidates(&self, kind: BrbMsgKind, k: NodeId) -> BTreeSet<Value> {
        let mut out = BTreeSet::new();
        for e in &self.entries {
            if let Some(set) = e.pairs(kind) {
                for (_, v) in set.range(lower(k)..).take_while(|(b, _)| *b == k) {
                    out.insert(v.clone());
                }
            }
        }
        out
    }

    fn ready_justified(&self, k: NodeId, m: &Value) -> bool {
        self.params.echo_quorum(self.echo_support(k, m))
            || self.ready_support(k, m) >= self.params.ready_amplify()
    }

    /// Own ECHO pairs must match the INIT held for that broadcaster and own
    /// READY pairs must be justified by an echo quorum or t+1 READYs.
    fn own_entry_consistent(&self) -> bool {
        let own = &self.entries[self.me.0];
        let echo_ok = own
            .echo
            .iter()
            .all(|(j, m)| self.entries[j.0].init.contains(m));
        let ready_ok = own.ready.iter().all(|(k, m)| self.ready_justified(*k, m));
        echo_ok && ready_ok
    }

    /// One iteration of the do-forever loop. Returns the payload to send.
    pub fn local_step(&mut self) -> BrbEntry {
        // Conflict scrub. Runs before the self-test so a READY that lost its
        // support to a scrub is caught in the same step.
        for e in &mut self.entries {
            if e.init.len() > 1 {
                e.init.clear();
            }
            for kind in [BrbMsgKind::Echo, BrbMsgKind::Ready] {
                let set = e.pairs_mut(kind).expect("pair kind");
                if has_conflict(set) {
                    set.clear();
                }
            }
        }

        if !self.own_entry_consistent() {
            self.recycle(self.me);
        }

        let me = self.me;
        for k in self.params.nodes() {
            // Echo at most one value per broadcaster.
            if !self.entries[me.0].has_pair_for(BrbMsgKind::Echo, k) {
                if let Some(m) = self.entries[k.0].init.iter().next().cloned() {
                    self.entries[me.0].echo.insert((k, m));
                }
            }
            if self.entries[me.0].has_pair_for(BrbMsgKind::Ready, k) {
                continue;
            }
            let from_echo = self
                .candidates(BrbMsgKind::Echo, k)
                .into_iter()
                .find(|m| self.params.echo_quorum(self.echo_support(k, m)));
            let chosen = from_echo.or_else(|| {
                self.candidates(BrbMsgKind::Ready, k)
                    .into_iter()
                    .find(|m| self.ready_support(k, m) >= self.params.ready_amplify())
            });
            if let Some(m) = chosen {
                self.entries[me.0].ready.insert((k, m));
            }
        }

        self.entries[me.0].clone()
    }

    /// Smallest value with a READY quorum for broadcaster `k`, and whether a
    /// second value also has one.
    pub fn quorum_value(&self, k: NodeId) -> Option<(Value, bool)> {
        let threshold = self.params.deliver_threshold();
        let mut it = self
            .candidates(BrbMsgKind::Ready, k)
            .into_iter()
            .filter(|m| self.ready_support(k, m) >= threshold);
        let first = it.next()?;
        Some((first, it.next().is_some()))
    }

    /// Pull-style delivery. `rx_available` is evaluated only when a READY
    /// quorum exists, so a recycling gate is consumed at most once per value.
    pub fn deliver(&mut self, k: NodeId, rx_available: impl FnOnce() -> bool) -> Option<Value> {
        let (m, double) = self.quorum_value(k)?;
        if double {
            self.double_quorums += 1;
        }
        if !rx_available() {
            return None;
        }
        self.was_delivered[k.0] = true;
        Some(m)
    }

    pub fn was_delivered(&self, k: NodeId) -> bool {
        self.was_delivered[k.0]
    }

    /// Local consistency: every entry conflict-free and every own READY
    /// justified. Channel consistency is checked by the verifier.
    pub fn is_consistent(&self) -> bool {
        self.entries.iter().all(BrbEntry::is_conflict_free)
            && self.entries[self.me.0]
                .ready
                .iter()
                .all(|(k, m)| self.ready_justified(*k, m))
    }
}
