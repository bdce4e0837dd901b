//! Property checkers over traces. Every checker is a pure function of the
//! trace records and a [`CheckConfig`], so a parsed trace file yields the
//! same reports as the in-memory trace it was rendered from.

pub mod consistency;
mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::irc::Round;
use crate::node::NodeEvent;
use crate::params::{NodeId, Params, Value};
use crate::trace::{Trace, TraceEvent};

pub use report::{summary, Check, PropertyReport, Verdict};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckConfig {
    pub params: Params,
    pub byzantine: BTreeSet<NodeId>,
    /// Byzantine nodes that fall silent, with the step they do so.
    pub mute: BTreeMap<NodeId, u64>,
    /// Broadcast and delivery go through the round counter.
    pub gated: bool,
    pub irc_only: bool,
    pub fifo: bool,
    /// Trusted sets are forced to all peers.
    pub trust_all: bool,
    /// Rounds after convergence before the checked suffix starts.
    pub settle_rounds: u64,
    /// Steps an obligation may stay open before it counts as violated.
    pub completion_window: u64,
    /// Rounds after a corruption within which all snapshots must be clean.
    pub convergence_rounds: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            params: Params::default(),
            byzantine: BTreeSet::new(),
            mute: BTreeMap::new(),
            gated: true,
            irc_only: false,
            fifo: false,
            trust_all: false,
            settle_rounds: 10,
            completion_window: 10_000,
            convergence_rounds: 50,
        }
    }
}

impl CheckConfig {
    fn honest(&self) -> Vec<NodeId> {
        self.params.nodes().filter(|i| !self.byzantine.contains(i)).collect()
    }

    fn is_honest(&self, i: NodeId) -> bool {
        !self.byzantine.contains(&i)
    }

    fn counters(&self) -> bool {
        self.gated || self.irc_only
    }
}

#[derive(Clone, Debug)]
struct Bcast {
    idx: usize,
    step: u64,
    node: NodeId,
    inst: usize,
    round: Round,
    value: Value,
}

#[derive(Clone, Debug)]
struct Deliv {
    idx: usize,
    step: u64,
    node: NodeId,
    inst: usize,
    from: NodeId,
    round: Round,
    value: Value,
}

#[derive(Clone, Copy, Debug)]
struct Tick {
    idx: usize,
    step: u64,
    node: NodeId,
    inst: usize,
    from: NodeId,
    round: Round,
}

#[derive(Clone, Debug)]
struct Snap {
    step: u64,
    clean: bool,
}

/// Trace records sorted into the event families the checkers need.
#[derive(Default)]
struct View {
    end: u64,
    corrupt: Option<(usize, u64)>,
    snaps: Vec<Snap>,
    bcasts: Vec<Bcast>,
    delivs: Vec<Deliv>,
    incrs: Vec<Tick>,
    enabled: Vec<Tick>,
    fetches: Vec<Tick>,
    trusted: Vec<(usize, u64, NodeId, usize, BTreeSet<NodeId>)>,
    bt: Vec<(NodeId, NodeId, Value)>,
}

impl View {
    fn new(trace: &Trace) -> View {
        let mut v = View::default();
        for (idx, r) in trace.records.iter().enumerate() {
            v.end = v.end.max(r.step);
            let node = r.node.unwrap_or(NodeId(usize::MAX));
            let step = r.step;
            match &r.event {
                TraceEvent::Corrupt { .. } => {
                    v.corrupt.get_or_insert((idx, step));
                }
                TraceEvent::Snapshot { bad_nodes, bad_channels, .. } => {
                    v.snaps.push(Snap { step, clean: bad_nodes.is_empty() && *bad_channels == 0 });
                }
                TraceEvent::BtDeliver { from, value, .. } => v.bt.push((node, *from, value.clone())),
                TraceEvent::Node(e) => match e {
                    NodeEvent::Broadcast { inst, round, value, .. } => {
                        v.bcasts.push(Bcast { idx, step, node, inst: *inst, round: *round, value: value.clone() })
                    }
                    NodeEvent::Deliver { inst, from, round, value } => v.delivs.push(Deliv {
                        idx,
                        step,
                        node,
                        inst: *inst,
                        from: *from,
                        round: *round,
                        value: value.clone(),
                    }),
                    NodeEvent::Increment { inst, round } => {
                        v.incrs.push(Tick { idx, step, node, inst: *inst, from: node, round: *round })
                    }
                    NodeEvent::Enabled { inst, round } => {
                        v.enabled.push(Tick { idx, step, node, inst: *inst, from: node, round: *round })
                    }
                    NodeEvent::Fetch { inst, from, round } => {
                        v.fetches.push(Tick { idx, step, node, inst: *inst, from: *from, round: *round })
                    }
                    NodeEvent::Trusted { inst, set, .. } => v.trusted.push((idx, step, node, *inst, set.clone())),
                    _ => {}
                },
                _ => {}
            }
        }
        v
    }
}

/// Where the checked suffix of a run begins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stabilization {
    pub corrupt_step: Option<u64>,
    /// Number of rounds from the corruption to the first snapshot after
    /// which every snapshot is clean.
    pub converged_after: Option<u64>,
    /// First step of the checked suffix; `u64::MAX` if the run never
    /// converged.
    pub cut: u64,
}

fn stabilization(v: &View, cfg: &CheckConfig) -> Stabilization {
    let Some((_, at)) = v.corrupt else {
        return Stabilization { corrupt_step: None, converged_after: Some(0), cut: 0 };
    };
    let after: Vec<&Snap> = v.snaps.iter().filter(|s| s.step >= at).collect();
    let first_clean = match after.iter().rposition(|s| !s.clean) {
        None => Some(0),
        Some(i) if i + 1 < after.len() => Some(i + 1),
        Some(_) => None,
    };
    match first_clean {
        None => Stabilization { corrupt_step: Some(at), converged_after: None, cut: u64::MAX },
        Some(i) => {
            let settle = (i + cfg.settle_rounds as usize).min(after.len() - 1);
            Stabilization { corrupt_step: Some(at), converged_after: Some(i as u64 + 1), cut: after[settle].step }
        }
    }
}

/// Collects findings for one property.
struct Tally {
    check: Check,
    name: &'static str,
    violated: Option<Vec<u64>>,
    inconclusive: bool,
}

impl Tally {
    fn new(check: Check, name: &'static str) -> Tally {
        Tally { check, name, violated: None, inconclusive: false }
    }

    fn violate(&mut self, witness: Vec<u64>) {
        if self.violated.is_none() {
            self.violated = Some(witness);
        }
    }

    /// An obligation opened at `since` and never met.
    fn open(&mut self, since: u64, end: u64, window: u64) {
        if end.saturating_sub(since) >= window {
            self.violate(vec![since]);
        } else {
            self.inconclusive = true;
        }
    }

    fn finish(self) -> PropertyReport {
        let (verdict, witness) = match self.violated {
            Some(w) => (Verdict::Violated, w),
            None if self.inconclusive => (Verdict::Inconclusive, Vec::new()),
            None => (Verdict::Holds, Vec::new()),
        };
        PropertyReport { check: self.check, property: self.name.to_string(), verdict, witness }
    }
}

/// Runs the selected checkers. Checks that do not apply to the trace's
/// mode produce no report.
pub fn check_all(trace: &Trace, cfg: &CheckConfig, checks: &BTreeSet<Check>) -> Vec<PropertyReport> {
    let v = View::new(trace);
    let st = stabilization(&v, cfg);
    let mut out = Vec::new();
    for c in checks {
        match c {
            Check::Brb if !cfg.irc_only => out.extend(check_brb(&v, cfg, &st)),
            Check::Irc if cfg.counters() => out.extend(check_irc(&v, cfg, &st)),
            Check::Muteness if cfg.counters() && !cfg.trust_all => out.extend(check_muteness(&v, cfg, &st)),
            Check::Consistency => out.push(check_consistency(&v, cfg, &st)),
            Check::Differential => out.push(check_differential(&v, cfg)),
            Check::Fifo if cfg.fifo && !cfg.irc_only => out.push(check_fifo(&v, cfg, &st)),
            _ => {}
        }
    }
    out
}

pub fn stabilization_of(trace: &Trace, cfg: &CheckConfig) -> Stabilization {
    stabilization(&View::new(trace), cfg)
}

type Key = (NodeId, usize);

fn matched_bcast<'a>(by_key: &HashMap<Key, Vec<&'a Bcast>>, d: &Deliv, gated: bool) -> Option<&'a Bcast> {
    by_key
        .get(&(d.from, d.inst))?
        .iter()
        .rev()
        .find(|b| b.idx < d.idx && (!gated || b.round == d.round))
        .copied()
}

fn check_brb(v: &View, cfg: &CheckConfig, st: &Stabilization) -> Vec<PropertyReport> {
    let honest = cfg.honest();
    let cut = st.cut;
    let mut by_key: HashMap<Key, Vec<&Bcast>> = HashMap::new();
    for b in &v.bcasts {
        if cfg.is_honest(b.node) {
            by_key.entry((b.node, b.inst)).or_default().push(b);
        }
    }
    let corrupted = st.corrupt_step.is_some();
    // Gated delivery rides on the counter, so it recovers with it.
    let counter_start = counter_scope(v, cfg, st);
    let from = |k: &Key| if cfg.gated { cut.max(counter_start(k)) } else { cut };
    let scoped: Vec<(&Deliv, Option<&Bcast>)> = v
        .delivs
        .iter()
        .filter(|d| cfg.is_honest(d.node) && d.step >= cut)
        .filter_map(|d| {
            if !cfg.is_honest(d.from) {
                return Some((d, None));
            }
            let b = matched_bcast(&by_key, d, cfg.gated);
            match b {
                Some(b) if b.step >= from(&(b.node, b.inst)) => Some((d, Some(b))),
                Some(_) => None,
                None if corrupted => None,
                None => Some((d, None)),
            }
        })
        .collect();

    let mut validity = Tally::new(Check::Brb, "brb.validity");
    for (d, b) in &scoped {
        if !cfg.is_honest(d.from) {
            continue;
        }
        match b {
            Some(b) if b.value == d.value => {}
            Some(b) => validity.violate(vec![b.step, d.step]),
            None => validity.violate(vec![d.step]),
        }
    }

    let mut integrity = Tally::new(Check::Brb, "brb.integrity");
    let mut last: HashMap<(NodeId, NodeId, usize), (Round, u64)> = HashMap::new();
    for (d, _) in &scoped {
        let key = (d.node, d.from, d.inst);
        if let Some((r, s)) = last.insert(key, (d.round, d.step)) {
            if !cfg.gated || r == d.round {
                integrity.violate(vec![s, d.step]);
            }
        }
    }

    let mut dup = Tally::new(Check::Brb, "brb.no-duplicity");
    let half = (cfg.params.big_b / 2) as u64;
    // Per slot: change counter of delivered rounds, and per round the last
    // value with the counter at that time.
    let mut epochs: HashMap<Key, (u64, Round)> = HashMap::new();
    let mut seen: HashMap<(NodeId, usize, Round), (Value, u64, u64)> = HashMap::new();
    for (d, _) in &scoped {
        let key = (d.from, d.inst);
        let round = if cfg.gated { d.round } else { Round::SENTINEL };
        let e = epochs.entry(key).or_insert((0, round));
        if e.1 != round {
            e.0 += 1;
            e.1 = round;
        }
        let epoch = e.0;
        if let Some((val, step, ep)) = seen.get(&(d.from, d.inst, round)) {
            if *val != d.value && (!cfg.gated || epoch - ep < half) {
                dup.violate(vec![*step, d.step]);
            }
        }
        seen.insert((d.from, d.inst, round), (d.value.clone(), d.step, epoch));
    }

    // Delivery index: (node, from, inst, round, value) -> steps.
    let mut got: HashMap<(NodeId, NodeId, usize, Round, Value), Vec<u64>> = HashMap::new();
    for (d, _) in &scoped {
        let round = if cfg.gated { d.round } else { Round::SENTINEL };
        got.entry((d.node, d.from, d.inst, round, d.value.clone())).or_default().push(d.step);
    }
    let window = cfg.completion_window;

    let mut c1 = Tally::new(Check::Brb, "brb.completion-1");
    for b in v.bcasts.iter().filter(|b| cfg.is_honest(b.node) && b.step >= from(&(b.node, b.inst))) {
        let round = if cfg.gated { b.round } else { Round::SENTINEL };
        for &x in &honest {
            let ok = got
                .get(&(x, b.node, b.inst, round, b.value.clone()))
                .is_some_and(|steps| steps.iter().any(|s| *s >= b.step));
            if !ok {
                c1.open(b.step, v.end, window);
            }
        }
    }

    let mut c2 = Tally::new(Check::Brb, "brb.completion-2");
    let mut done: BTreeSet<(NodeId, usize, Round, Value)> = BTreeSet::new();
    for (d, _) in &scoped {
        let round = if cfg.gated { d.round } else { Round::SENTINEL };
        if !done.insert((d.from, d.inst, round, d.value.clone())) {
            continue;
        }
        for &y in &honest {
            if !got.contains_key(&(y, d.from, d.inst, round, d.value.clone())) {
                c2.open(d.step, v.end, window);
            }
        }
    }

    vec![validity.finish(), integrity.finish(), dup.finish(), c1.finish(), c2.finish()]
}

/// Per counter, the first step of the checked suffix: with a corruption,
/// the second increment after the cut, by which time every trusted node
/// has fetched a round that was produced after the cut.
fn counter_scope(v: &View, cfg: &CheckConfig, st: &Stabilization) -> impl Fn(&Key) -> u64 {
    let mut seen: HashMap<Key, usize> = HashMap::new();
    let mut scope: HashMap<Key, u64> = HashMap::new();
    if st.corrupt_step.is_some() {
        for t in v.incrs.iter().filter(|t| cfg.is_honest(t.node) && t.step >= st.cut) {
            let c = seen.entry((t.node, t.inst)).or_insert(0);
            *c += 1;
            if *c == 2 {
                scope.insert((t.node, t.inst), t.step);
            }
        }
    }
    let corrupted = st.corrupt_step.is_some();
    move |k: &Key| match scope.get(k) {
        Some(s) => *s,
        None if corrupted => u64::MAX,
        None => 0,
    }
}

fn check_irc(v: &View, cfg: &CheckConfig, st: &Stabilization) -> Vec<PropertyReport> {
    let p = &cfg.params;
    let honest = cfg.honest();
    let mut incrs: HashMap<Key, Vec<&Tick>> = HashMap::new();
    for t in &v.incrs {
        if cfg.is_honest(t.node) {
            incrs.entry((t.node, t.inst)).or_default().push(t);
        }
    }
    let start = counter_scope(v, cfg, st);
    let empty = Vec::new();

    let mut validity = Tally::new(Check::Irc, "irc.validity");
    let mut int1 = Tally::new(Check::Irc, "irc.integrity-1");
    let mut int2 = Tally::new(Check::Irc, "irc.integrity-2");
    let mut prev: HashMap<(NodeId, NodeId, usize), (&Tick, Option<usize>)> = HashMap::new();
    for f in &v.fetches {
        if !cfg.is_honest(f.node) || !cfg.is_honest(f.from) {
            continue;
        }
        let key = (f.from, f.inst);
        if f.step < start(&key) {
            continue;
        }
        let list = incrs.get(&key).unwrap_or(&empty);
        let before = list.partition_point(|t| t.idx < f.idx);
        let window = &list[before.saturating_sub(p.lambda as usize + 1)..before];
        let matched = window.iter().rposition(|t| t.round == f.round).map(|i| before - window.len() + i);
        if matched.is_none() {
            validity.violate(vec![f.step]);
        }
        if let Some((g, gm)) = prev.insert((f.node, f.from, f.inst), (f, matched)) {
            if f.round != g.round.next(p.big_b) {
                int1.violate(vec![g.step, f.step]);
            }
            if let (Some(a), Some(b)) = (gm, matched) {
                if a >= b {
                    int2.violate(vec![g.step, f.step]);
                }
            }
        }
    }

    let mut fetched: HashMap<(NodeId, NodeId, usize, Round), Vec<usize>> = HashMap::new();
    for f in &v.fetches {
        fetched.entry((f.node, f.from, f.inst, f.round)).or_default().push(f.idx);
    }
    let mut pre = Tally::new(Check::Irc, "irc.preemption");
    let mut comp = Tally::new(Check::Irc, "irc.completion");
    let mut enabled: HashMap<Key, Vec<usize>> = HashMap::new();
    for t in &v.enabled {
        enabled.entry((t.node, t.inst)).or_default().push(t.idx);
    }
    let mut keys: Vec<&Key> = incrs.keys().collect();
    keys.sort();
    for key in keys {
        let list = &incrs[key];
        let from = start(key);
        for (i, t) in list.iter().enumerate() {
            if t.step < from {
                continue;
            }
            let next = list.get(i + 1);
            if let Some(n) = next {
                for &x in honest.iter().filter(|x| **x != key.0) {
                    let ok = fetched
                        .get(&(x, key.0, key.1, t.round))
                        .is_some_and(|idxs| idxs.iter().any(|j| *j > t.idx && *j < n.idx));
                    if !ok {
                        pre.violate(vec![t.step, n.step]);
                    }
                }
            }
            let reenabled =
                next.is_some() || enabled.get(key).is_some_and(|e| e.iter().any(|j| *j > t.idx));
            if !reenabled {
                comp.open(t.step, v.end, cfg.completion_window);
            }
        }
    }
    vec![validity.finish(), int1.finish(), int2.finish(), pre.finish(), comp.finish()]
}

type Timeline<'a> = HashMap<Key, Vec<(usize, u64, &'a BTreeSet<NodeId>)>>;

fn check_muteness(v: &View, cfg: &CheckConfig, st: &Stabilization) -> Vec<PropertyReport> {
    let honest = cfg.honest();
    let mut timeline: Timeline = HashMap::new();
    for (idx, step, node, inst, set) in &v.trusted {
        timeline.entry((*node, *inst)).or_default().push((*idx, *step, set));
    }
    let mut incrs: HashMap<Key, Vec<usize>> = HashMap::new();
    for t in &v.incrs {
        incrs.entry((t.node, t.inst)).or_default().push(t.idx);
    }
    let incr_step: HashMap<usize, u64> = v.incrs.iter().map(|t| (t.idx, t.step)).collect();
    let step_of = |idx: usize| -> u64 { incr_step.get(&idx).copied().unwrap_or(0) };
    let empty_t = Vec::new();
    let empty_i = Vec::new();

    let mut complete = Tally::new(Check::Muteness, "muteness.completeness");
    for (&m, &from) in &cfg.mute {
        for &x in &honest {
            for a in 0..cfg.params.delta {
                let tl = timeline.get(&(x, a)).unwrap_or(&empty_t);
                let inc = incrs.get(&(x, a)).unwrap_or(&empty_i);
                // Intervals that start after the mute step. The interval the
                // mute step falls in may legitimately end without a
                // suspicion (round trips done before muting), so it only
                // counts while it is still open.
                let mut bounds: Vec<(usize, u64)> =
                    inc.iter().filter(|i| step_of(**i) > from).map(|i| (*i, step_of(*i))).collect();
                if bounds.is_empty() {
                    let lo = inc.iter().rev().find(|i| step_of(**i) <= from).copied().unwrap_or(0);
                    bounds.push((lo, from));
                }
                for (n, (lo, lo_step)) in bounds.iter().enumerate() {
                    let hi = bounds.get(n + 1).map(|b| b.0);
                    let suspected = tl.iter().any(|(idx, step, set)| {
                        *idx > *lo && hi.is_none_or(|h| *idx < h) && *step >= from && !set.contains(&m)
                    });
                    if !suspected {
                        match hi {
                            Some(_) => complete.violate(vec![*lo_step]),
                            None => complete.open(*lo_step, v.end, cfg.completion_window),
                        }
                    }
                }
            }
        }
    }

    let mut accurate = Tally::new(Check::Muteness, "muteness.accuracy");
    let suspects_honest = |x: NodeId, set: &BTreeSet<NodeId>| honest.iter().any(|j| *j != x && !set.contains(j));
    // The detector recovers with the counter it observes: each timeline is
    // checked from that counter's scope, including the set in force there.
    let counter_start = counter_scope(v, cfg, st);
    for &x in &honest {
        for a in 0..cfg.params.delta {
            let from = st.cut.max(counter_start(&(x, a)));
            if from == u64::MAX {
                continue;
            }
            let tl = timeline.get(&(x, a)).unwrap_or(&empty_t);
            if let Some((_, step, _)) = tl.iter().find(|(_, step, set)| *step >= from && suspects_honest(x, set)) {
                accurate.violate(vec![*step]);
            }
            if let Some((_, _, set)) = tl.iter().rev().find(|(_, step, _)| *step < from) {
                if suspects_honest(x, set) {
                    accurate.violate(vec![from]);
                }
            }
        }
    }
    vec![complete.finish(), accurate.finish()]
}

fn check_consistency(v: &View, cfg: &CheckConfig, st: &Stabilization) -> PropertyReport {
    let mut t = Tally::new(Check::Consistency, "consistency");
    match st.corrupt_step {
        None => {
            if let Some(s) = v.snaps.iter().find(|s| !s.clean) {
                t.violate(vec![s.step]);
            }
        }
        Some(at) => {
            let after = v.snaps.iter().filter(|s| s.step >= at).count() as u64;
            match st.converged_after {
                Some(r) if r <= cfg.convergence_rounds => {}
                Some(_) => {
                    let last_bad = v.snaps.iter().rev().find(|s| !s.clean).map_or(at, |s| s.step);
                    t.violate(vec![at, last_bad]);
                }
                None if after > cfg.convergence_rounds => {
                    let last_bad = v.snaps.iter().rev().find(|s| !s.clean).map_or(at, |s| s.step);
                    t.violate(vec![at, last_bad]);
                }
                None => t.inconclusive = true,
            }
        }
    }
    t.finish()
}

fn check_differential(v: &View, cfg: &CheckConfig) -> PropertyReport {
    let mut t = Tally::new(Check::Differential, "differential");
    for x in cfg.honest() {
        let mut ss: BTreeMap<(NodeId, Value), usize> = BTreeMap::new();
        let mut first: BTreeMap<(NodeId, Value), u64> = BTreeMap::new();
        for d in v.delivs.iter().filter(|d| d.node == x) {
            *ss.entry((d.from, d.value.clone())).or_default() += 1;
            first.entry((d.from, d.value.clone())).or_insert(d.step);
        }
        let mut bt: BTreeMap<(NodeId, Value), usize> = BTreeMap::new();
        for (_, from, value) in v.bt.iter().filter(|b| b.0 == x) {
            *bt.entry((*from, value.clone())).or_default() += 1;
        }
        if ss != bt {
            let witness = ss
                .iter()
                .find(|(k, n)| bt.get(*k) != Some(*n))
                .map_or(v.end, |(k, _)| first[k]);
            t.violate(vec![witness]);
        }
    }
    t.finish()
}

fn check_fifo(v: &View, cfg: &CheckConfig, st: &Stabilization) -> PropertyReport {
    let mut t = Tally::new(Check::Fifo, "fifo");
    let delta = cfg.params.delta;
    let mut last: HashMap<(NodeId, NodeId), usize> = HashMap::new();
    for d in v.delivs.iter().filter(|d| cfg.is_honest(d.node) && d.step >= st.cut) {
        let expect = match last.get(&(d.node, d.from)) {
            Some(l) => Some((l + 1) % delta),
            None if st.corrupt_step.is_none() => Some(0),
            None => None,
        };
        if expect.is_some_and(|e| e != d.inst) {
            t.violate(vec![d.step]);
        }
        last.insert((d.node, d.from), d.inst);
    }
    t.finish()
}
