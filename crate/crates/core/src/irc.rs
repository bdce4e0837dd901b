//! Independent round counter: bounded per-broadcaster rounds with a
//! stop-and-wait acknowledgment scheme, driving BRB slot recycling.

use std::collections::BTreeSet;
use std::fmt;

use crate::params::{Mutation, NodeId, Params};

/// A round number in `{-1} ∪ [0, B)`. `-1` means "no round yet" and sits at
/// position `B-1` in the modular windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Round(i64);

impl Round {
    pub const SENTINEL: Round = Round(-1);

    /// Normalizes any integer into the round domain.
    pub fn new(v: i64, big_b: u32) -> Round {
        if v == -1 {
            Round::SENTINEL
        } else {
            Round(v.rem_euclid(big_b as i64))
        }
    }

    /// Keeps the integer as received; [`Round::new`] normalizes later.
    pub fn from_raw(v: i64) -> Round {
        Round(v)
    }

    pub fn raw(self) -> i64 {
        self.0
    }

    pub fn is_sentinel(self) -> bool {
        self.0 == -1
    }

    /// Position on the mod-B circle.
    pub fn pos(self, big_b: u32) -> u32 {
        if self.is_sentinel() {
            big_b - 1
        } else {
            self.0.rem_euclid(big_b as i64) as u32
        }
    }

    pub fn next(self, big_b: u32) -> Round {
        Round(((self.pos(big_b) + 1) % big_b) as i64)
    }
}

impl fmt::Display for Round {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// True iff `s` lies in `{c - d*lambda, ..., c}` mod B.
pub fn behind(d: u32, s: Round, c: Round, params: &Params) -> bool {
    let b = params.big_b;
    let diff = (c.pos(b) + b - s.pos(b)) % b;
    diff <= d * params.lambda
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IrcWire {
    /// `true` when the sender asks for an acknowledgment.
    pub ack: bool,
    pub seq: Round,
    pub lbl: u32,
}

/// Callbacks into the BRB object and the muteness detector.
pub trait IrcHooks {
    fn recycle(&mut self, k: NodeId);
    fn md_reset(&mut self);
    fn md_cnt(&mut self, j: NodeId);
}

/// Hooks that do nothing; handy for driving the counter alone.
#[derive(Default)]
pub struct NoHooks;

impl IrcHooks for NoHooks {
    fn recycle(&mut self, _k: NodeId) {}
    fn md_reset(&mut self) {}
    fn md_cnt(&mut self, _j: NodeId) {}
}

/// What `rx` did with an arrival.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RxOutcome {
    /// A matching acknowledgment: label advanced.
    Acked { lbl: u32 },
    /// Receiver path. `fresh` is set when `cur[j]` moved.
    Received { fresh: bool, reply: Option<IrcWire> },
}

impl RxOutcome {
    pub fn reply(&self) -> Option<IrcWire> {
        match self {
            RxOutcome::Acked { .. } => None,
            RxOutcome::Received { reply, .. } => *reply,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrcState {
    me: NodeId,
    params: Params,
    pub cur: Vec<Round>,
    pub nxt: Vec<Round>,
    pub lbl: Vec<u32>,
    /// Send replies only to messages that asked for one.
    pub reply_only_to_ack_requests: bool,
}

impl IrcState {
    pub fn new(me: NodeId, params: &Params) -> Self {
        IrcState {
            me,
            params: params.clone(),
            cur: vec![Round::SENTINEL; params.n],
            nxt: vec![Round::SENTINEL; params.n],
            lbl: vec![0; params.n],
            reply_only_to_ack_requests: false,
        }
    }

    pub fn me(&self) -> NodeId {
        self.me
    }

    pub fn own_round(&self) -> Round {
        self.cur[self.me.0]
    }

    pub fn increment_enabled(&self, trusted: &BTreeSet<NodeId>) -> bool {
        let threshold = self.params.label_threshold();
        self.own_round().is_sentinel()
            || trusted
                .iter()
                .filter(|j| **j != self.me)
                .all(|j| self.lbl[j.0] > threshold)
    }

    pub fn increment(&mut self, trusted: &BTreeSet<NodeId>, hooks: &mut impl IrcHooks) -> Option<Round> {
        if !self.increment_enabled(trusted) {
            return None;
        }
        hooks.md_reset();
        let me = self.me.0;
        self.cur[me] = self.cur[me].next(self.params.big_b);
        if self.params.mutation != Mutation::NoLabelReset {
            self.lbl.iter_mut().for_each(|l| *l = 0);
        }
        hooks.recycle(self.me);
        Some(self.cur[me])
    }

    pub fn fetch(&mut self, k: NodeId) -> Option<Round> {
        if behind(1, self.cur[k.0], self.nxt[k.0], &self.params) {
            return None;
        }
        self.nxt[k.0] = self.cur[k.0];
        Some(self.nxt[k.0])
    }

    pub fn tx(&self, j: NodeId) -> IrcWire {
        IrcWire { ack: true, seq: self.own_round(), lbl: self.lbl[j.0] }
    }

    pub fn rx(&mut self, j: NodeId, w: IrcWire, hooks: &mut impl IrcHooks) -> RxOutcome {
        let b = self.params.big_b;
        let seq = Round::new(w.seq.raw(), b);
        if !w.ack && behind(2, self.own_round(), seq, &self.params) && self.lbl[j.0] == w.lbl {
            hooks.md_cnt(j);
            let lbl = b.min(w.lbl.saturating_add(1));
            self.lbl[j.0] = lbl;
            return RxOutcome::Acked { lbl };
        }
        // The seq of a reply names our own round, so only requests can
        // carry news about j's counter.
        let mut fresh = false;
        if w.ack && !behind(1, seq, self.cur[j.0], &self.params) {
            self.cur[j.0] = seq;
            hooks.recycle(j);
            fresh = true;
        }
        let reply = if w.ack || !self.reply_only_to_ack_requests {
            Some(IrcWire { ack: false, seq: self.nxt[j.0], lbl: w.lbl })
        } else {
            None
        };
        RxOutcome::Received { fresh, reply }
    }

    pub fn tx_available(&mut self, trusted: &BTreeSet<NodeId>, hooks: &mut impl IrcHooks) -> bool {
        self.increment(trusted, hooks).is_some()
    }

    pub fn rx_available(&mut self, k: NodeId) -> bool {
        self.fetch(k).is_some()
    }
}
