//! Scenario files: flat `section.key = value` lines, `#` comments.
//!
//! ```text
//! scenario.mode = integrated
//! params.n = 4
//! params.t = 1
//! adversary.p3 = equivocate-init
//! run.seeds = 0..100
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use thiserror::Error;

use crate::params::{Mutation, NodeId, Params, Violation};
use crate::sim::baseline_run::run_differential;
use crate::sim::{AdversarySpec, CorruptionSpec, Scope, Strategy, World, WorldConfig};
use crate::trace::{Trace, TraceError};
use crate::verify::{check_all, Check, CheckConfig, PropertyReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// One BRB object per instance, no counter, no lifetime bound.
    SingleBrbAsync,
    /// The round counter and detector alone.
    IrcOnly,
    /// BRB recycled through the counter, detector-backed trust.
    Integrated,
    /// Single-shot BRB next to the reference baseline.
    BaselineDifferential,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::SingleBrbAsync, Mode::IrcOnly, Mode::Integrated, Mode::BaselineDifferential];

    pub fn name(self) -> &'static str {
        match self {
            Mode::SingleBrbAsync => "single-brb-async",
            Mode::IrcOnly => "irc-only",
            Mode::Integrated => "integrated",
            Mode::BaselineDifferential => "baseline-differential",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }

    fn default_checks(self, fifo: bool) -> BTreeSet<Check> {
        let mut c: BTreeSet<Check> = match self {
            Mode::SingleBrbAsync => [Check::Brb, Check::Consistency].into(),
            Mode::IrcOnly => [Check::Irc, Check::Muteness, Check::Consistency].into(),
            Mode::Integrated => [Check::Brb, Check::Irc, Check::Muteness, Check::Consistency].into(),
            Mode::BaselineDifferential => [Check::Brb, Check::Consistency, Check::Differential].into(),
        };
        if fifo && self != Mode::IrcOnly {
            c.insert(Check::Fifo);
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub mode: Mode,
    pub world: WorldConfig,
    pub seeds: Vec<u64>,
    pub checks: BTreeSet<Check>,
    pub settle_rounds: u64,
    pub completion_window: u64,
    pub convergence_rounds: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `section.key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("lines {first} and {second}: duplicate key `{key}`")]
    Duplicate { key: String, first: usize, second: usize },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("{}: {msg}", lines_str(.lines))]
    Invalid { lines: Vec<usize>, msg: String },
}

fn lines_str(lines: &[usize]) -> String {
    match lines {
        [] => "defaults".to_string(),
        [l] => format!("line {l}"),
        ls => format!("lines {}", ls.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", ")),
    }
}

const KEYS: &[&str] = &[
    "scenario.mode",
    "params.n",
    "params.t",
    "params.capacity",
    "params.lambda",
    "params.big_b",
    "params.theta",
    "params.delta",
    "params.max_value_len",
    "params.mutation",
    "network.p_loss",
    "network.p_dup",
    "network.deliveries_per_round",
    "network.horizon",
    "network.rt_guard",
    "transient.at_step",
    "transient.scope",
    "transient.nodes",
    "transient.instances",
    "workload.broadcasts",
    "workload.value_len",
    "node.fifo",
    "node.trust_all",
    "node.reply_only_to_ack_requests",
    "node.queue_depth",
    "node.resync",
    "check.list",
    "check.settle_rounds",
    "check.completion_window",
    "check.convergence_rounds",
    "run.seeds",
    "run.stop_when_done",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|(l, _)| *l)
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| ConfigError::BadValue {
                line,
                key: key.into(),
                msg: format!("cannot parse {v:?}"),
            }),
        }
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn bad(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::BadValue { line: self.line(key).unwrap_or(0), key: key.into(), msg: msg.into() }
    }

    fn lines(&self, keys: &[&str]) -> Vec<usize> {
        let mut l: Vec<usize> = keys.iter().filter_map(|k| self.line(k)).collect();
        l.sort_unstable();
        l
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(|x| x.parse().ok()).collect()
}

pub fn parse_seeds(s: &str) -> Option<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let r: Range<u64> = a.trim().parse().ok()?..b.trim().parse().ok()?;
        return Some(r.collect());
    }
    parse_list(s)
}

fn violation_keys(v: Violation) -> &'static [&'static str] {
    match v {
        Violation::Resilience => &["params.n", "params.t"],
        Violation::CapacityBelowLambda => &["params.capacity", "params.lambda"],
        Violation::LambdaBelowWrapSixth => &["params.lambda", "params.big_b"],
        Violation::ThetaPositive => &["params.theta"],
        Violation::DeltaPositive => &["params.delta"],
        Violation::NodeCountPositive => &["params.n"],
        Violation::CapacityPositive => &["params.capacity"],
        Violation::LambdaPositive => &["params.lambda"],
        Violation::ValueLenPositive => &["params.max_value_len"],
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ConfigError> {
        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (k, v) = (k.trim(), v.trim());
            if !k.contains('.') || k.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            let known = KEYS.contains(&k) || k.strip_prefix("adversary.p").is_some_and(|n| n.parse::<usize>().is_ok());
            if !known {
                return Err(ConfigError::UnknownKey { line, key: k.into() });
            }
            if let Some((first, _)) = map.get(k) {
                return Err(ConfigError::Duplicate { key: k.into(), first: *first, second: line });
            }
            map.insert(k.to_string(), (line, v.to_string()));
        }
        Scenario::build(&Entries { map })
    }

    fn build(e: &Entries) -> Result<Scenario, ConfigError> {
        let mode = match e.raw("scenario.mode") {
            None => Mode::Integrated,
            Some((_, v)) => Mode::parse(v).ok_or_else(|| e.bad("scenario.mode", format!("unknown mode {v:?}")))?,
        };
        let d = Params::default();
        let mutation = match e.raw("params.mutation") {
            None => Mutation::None,
            Some((_, v)) => Mutation::parse(v).ok_or_else(|| e.bad("params.mutation", format!("unknown mutation {v:?}")))?,
        };
        let params = Params {
            n: e.or("params.n", d.n)?,
            t: e.or("params.t", d.t)?,
            capacity: e.or("params.capacity", d.capacity)?,
            lambda: e.or("params.lambda", d.lambda)?,
            big_b: e.or("params.big_b", d.big_b)?,
            theta: e.or("params.theta", d.theta)?,
            delta: e.or("params.delta", d.delta)?,
            max_value_len: e.or("params.max_value_len", d.max_value_len)?,
            mutation,
        };
        if let Err(err) = params.validate() {
            let keys: Vec<&str> = err.0.iter().flat_map(|v| violation_keys(*v).iter().copied()).collect();
            return Err(ConfigError::Invalid { lines: e.lines(&keys), msg: err.to_string() });
        }

        let mut world = WorldConfig { params: params.clone(), ..WorldConfig::default() };
        let reliable = mode == Mode::BaselineDifferential;
        let net = &mut world.network;
        net.p_loss = e.or("network.p_loss", if reliable { 0.0 } else { net.p_loss })?;
        net.p_dup = e.or("network.p_dup", if reliable { 0.0 } else { net.p_dup })?;
        net.deliveries_per_round = e.or("network.deliveries_per_round", net.deliveries_per_round)?;
        net.horizon = e.or("network.horizon", net.horizon)?;
        net.rt_guard = e.or("network.rt_guard", net.rt_guard)?;
        net.bml = matches!(mode, Mode::Integrated | Mode::IrcOnly);
        for key in ["network.p_loss", "network.p_dup"] {
            let p: f64 = e.or(key, 0.0)?;
            if !(0.0..1.0).contains(&p) {
                return Err(e.bad(key, "must lie in [0, 1)"));
            }
        }
        if world.network.deliveries_per_round == 0 {
            return Err(e.bad("network.deliveries_per_round", "must be positive"));
        }

        let node = &mut world.node;
        node.gated = mode == Mode::Integrated;
        node.irc_only = mode == Mode::IrcOnly;
        node.fifo = e.or("node.fifo", false)?;
        node.trust_all = e.or("node.trust_all", false)?;
        node.reply_only_to_ack_requests = e.or("node.reply_only_to_ack_requests", false)?;
        node.queue_depth = e.or("node.queue_depth", node.queue_depth)?;
        node.resync = e.or("node.resync", node.resync)?;

        world.workload.broadcasts = e.or("workload.broadcasts", world.workload.broadcasts)?;
        world.workload.value_len = e.or("workload.value_len", world.workload.value_len)?;
        if world.workload.value_len + crate::node::STAMP_LEN > params.max_value_len {
            return Err(e.bad("workload.value_len", "longer than params.max_value_len allows"));
        }

        let mut adversary = AdversarySpec::default();
        for (k, (line, v)) in &e.map {
            if let Some(i) = k.strip_prefix("adversary.p") {
                let i: usize = i.parse().expect("checked while reading keys");
                let s = Strategy::parse(v).ok_or_else(|| ConfigError::BadValue {
                    line: *line,
                    key: k.clone(),
                    msg: format!("unknown strategy {v:?}"),
                })?;
                adversary.nodes.insert(NodeId(i), s);
            }
        }
        if let Err(msg) = adversary.check(&params) {
            let keys: Vec<&str> = e.map.keys().filter(|k| k.starts_with("adversary.")).map(String::as_str).collect();
            return Err(ConfigError::Invalid { lines: e.lines(&keys), msg });
        }
        world.adversary = adversary;

        if let Some(at_step) = e.get::<u64>("transient.at_step")? {
            let scope = match e.raw("transient.scope") {
                None | Some((_, "full")) => Scope::ALL.into_iter().collect(),
                Some((_, "none")) => BTreeSet::new(),
                Some((_, v)) => v
                    .split(',')
                    .map(|s| Scope::parse(s.trim()))
                    .collect::<Option<BTreeSet<Scope>>>()
                    .ok_or_else(|| e.bad("transient.scope", format!("unknown scope in {v:?}")))?,
            };
            let nodes = match e.raw("transient.nodes") {
                None => None,
                Some((_, v)) => {
                    let l: Vec<usize> = parse_list(v).ok_or_else(|| e.bad("transient.nodes", "expected a list"))?;
                    if l.iter().any(|i| *i >= params.n) {
                        return Err(e.bad("transient.nodes", "node outside 0..n"));
                    }
                    Some(l.into_iter().map(NodeId).collect())
                }
            };
            let instances = match e.raw("transient.instances") {
                None => None,
                Some((_, v)) => {
                    let l: Vec<usize> = parse_list(v).ok_or_else(|| e.bad("transient.instances", "expected a list"))?;
                    if l.iter().any(|a| *a >= params.delta) {
                        return Err(e.bad("transient.instances", "instance outside 0..delta"));
                    }
                    Some(l.into_iter().collect())
                }
            };
            world.transient = Some(CorruptionSpec { at_step, scope, nodes, instances });
        } else {
            for key in ["transient.scope", "transient.nodes", "transient.instances"] {
                if e.line(key).is_some() {
                    return Err(e.bad(key, "needs transient.at_step"));
                }
            }
        }

        if mode == Mode::IrcOnly {
            world.node.increments = Some(world.workload.broadcasts as u64);
        }
        world.stop_when_done = e.or("run.stop_when_done", reliable || mode == Mode::IrcOnly)?;
        let seeds = match e.raw("run.seeds") {
            None => vec![0],
            Some((_, v)) => parse_seeds(v).ok_or_else(|| e.bad("run.seeds", "expected A..B or a list"))?,
        };
        let checks = match e.raw("check.list") {
            None => mode.default_checks(world.node.fifo),
            Some((_, v)) => v
                .split(',')
                .map(|s| Check::parse(s.trim()))
                .collect::<Option<BTreeSet<Check>>>()
                .ok_or_else(|| e.bad("check.list", format!("unknown check in {v:?}")))?,
        };
        let tuning = CheckConfig::default();
        Ok(Scenario {
            mode,
            world,
            seeds,
            checks,
            settle_rounds: e.or("check.settle_rounds", tuning.settle_rounds)?,
            completion_window: e.or("check.completion_window", tuning.completion_window)?,
            convergence_rounds: e.or("check.convergence_rounds", tuning.convergence_rounds)?,
        })
    }

    /// A scenario with every knob at its default.
    pub fn with_mode(mode: Mode) -> Scenario {
        Scenario::parse(&format!("scenario.mode = {}", mode.name())).expect("defaults are valid")
    }

    pub fn check_config(&self) -> CheckConfig {
        let adv = &self.world.adversary;
        CheckConfig {
            params: self.world.params.clone(),
            byzantine: adv.corrupt(),
            mute: adv.nodes.iter().filter_map(|(i, s)| s.mute_from().map(|m| (*i, m))).collect(),
            gated: self.world.node.gated,
            irc_only: self.world.node.irc_only,
            fifo: self.world.node.fifo,
            trust_all: self.world.node.trust_all,
            settle_rounds: self.settle_rounds,
            completion_window: self.completion_window,
            convergence_rounds: self.convergence_rounds,
        }
    }

    /// Simulates one seed; the trace header embeds the scenario so the
    /// trace can be checked again without the config file.
    pub fn simulate(&self, seed: u64) -> Trace {
        let mut trace = if self.mode == Mode::BaselineDifferential {
            run_differential(&self.world, seed)
        } else {
            let mut w = World::new(self.world.clone(), seed);
            w.run();
            w.trace
        };
        let mut header = vec!["ssbrb-trace 1".to_string(), format!("seed={seed}")];
        header.extend(self.to_string().lines().map(|l| format!("cfg {l}")));
        trace.header = header;
        trace
    }

    pub fn check(&self, trace: &Trace) -> Vec<PropertyReport> {
        check_all(trace, &self.check_config(), &self.checks)
    }

    /// Rebuilds the scenario from a trace header.
    pub fn from_trace(trace: &Trace) -> Result<Scenario, ReplayError> {
        let cfg: Vec<&str> = trace.header.iter().filter_map(|h| h.strip_prefix("cfg ")).collect();
        if cfg.is_empty() {
            return Err(ReplayError::NoConfig);
        }
        Ok(Scenario::parse(&cfg.join("\n"))?)
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
    #[error("trace header has no embedded config")]
    NoConfig,
    #[error("embedded config: {0}")]
    Config(#[from] ConfigError),
}

pub fn replay(text: &str) -> Result<(Scenario, Trace, Vec<PropertyReport>), ReplayError> {
    let trace = Trace::parse(text)?;
    let scenario = Scenario::from_trace(&trace)?;
    let reports = scenario.check(&trace);
    Ok((scenario, trace, reports))
}

/// Canonical text: every key, fixed order. Parsing it back yields an equal
/// scenario.
impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = &self.world;
        let p = &w.params;
        writeln!(f, "scenario.mode = {}", self.mode.name())?;
        writeln!(f, "params.n = {}", p.n)?;
        writeln!(f, "params.t = {}", p.t)?;
        writeln!(f, "params.capacity = {}", p.capacity)?;
        writeln!(f, "params.lambda = {}", p.lambda)?;
        writeln!(f, "params.big_b = {}", p.big_b)?;
        writeln!(f, "params.theta = {}", p.theta)?;
        writeln!(f, "params.delta = {}", p.delta)?;
        writeln!(f, "params.max_value_len = {}", p.max_value_len)?;
        writeln!(f, "params.mutation = {}", p.mutation.name())?;
        writeln!(f, "network.p_loss = {}", w.network.p_loss)?;
        writeln!(f, "network.p_dup = {}", w.network.p_dup)?;
        writeln!(f, "network.deliveries_per_round = {}", w.network.deliveries_per_round)?;
        writeln!(f, "network.horizon = {}", w.network.horizon)?;
        writeln!(f, "network.rt_guard = {}", w.network.rt_guard)?;
        for (i, s) in &w.adversary.nodes {
            writeln!(f, "adversary.p{} = {s}", i.0)?;
        }
        if let Some(c) = &w.transient {
            writeln!(f, "transient.at_step = {}", c.at_step)?;
            writeln!(f, "transient.scope = {}", if c.scope.is_empty() { "none".into() } else { c.scope_string().replace(';', ",") })?;
            if let Some(nodes) = &c.nodes {
                let l: Vec<String> = nodes.iter().map(|n| n.0.to_string()).collect();
                writeln!(f, "transient.nodes = {}", l.join(","))?;
            }
            if let Some(inst) = &c.instances {
                let l: Vec<String> = inst.iter().map(|a| a.to_string()).collect();
                writeln!(f, "transient.instances = {}", l.join(","))?;
            }
        }
        writeln!(f, "workload.broadcasts = {}", w.workload.broadcasts)?;
        writeln!(f, "workload.value_len = {}", w.workload.value_len)?;
        writeln!(f, "node.fifo = {}", w.node.fifo)?;
        writeln!(f, "node.trust_all = {}", w.node.trust_all)?;
        writeln!(f, "node.reply_only_to_ack_requests = {}", w.node.reply_only_to_ack_requests)?;
        writeln!(f, "node.queue_depth = {}", w.node.queue_depth)?;
        writeln!(f, "node.resync = {}", w.node.resync)?;
        let checks: Vec<&str> = self.checks.iter().map(|c| c.name()).collect();
        writeln!(f, "check.list = {}", checks.join(","))?;
        writeln!(f, "check.settle_rounds = {}", self.settle_rounds)?;
        writeln!(f, "check.completion_window = {}", self.completion_window)?;
        writeln!(f, "check.convergence_rounds = {}", self.convergence_rounds)?;
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        writeln!(f, "run.seeds = {}", seeds.join(","))?;
        writeln!(f, "run.stop_when_done = {}", w.stop_when_done)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let s = Scenario::parse("scenario.mode = integrated\n").unwrap();
        assert_eq!(s.world.params, Params::default());
        assert!(s.world.node.gated);
        assert!(s.world.network.bml);
        assert_eq!(s.seeds, vec![0]);
        assert!(s.checks.contains(&Check::Irc));
    }

    #[test]
    fn resilience_error_names_lines() {
        let err = Scenario::parse("params.t = 2\nparams.n = 4\n").unwrap_err();
        assert_eq!(err, ConfigError::Invalid { lines: vec![1, 2], msg: "invalid parameters: 3t+1<=n".into() });
        assert!(err.to_string().starts_with("lines 1, 2"));
    }

    #[test]
    fn duplicate_key_reports_both_lines() {
        let err = Scenario::parse("params.n = 4\n# c\nparams.n = 7\n").unwrap_err();
        assert_eq!(err, ConfigError::Duplicate { key: "params.n".into(), first: 1, second: 3 });
    }

    #[test]
    fn unknown_key_and_syntax() {
        assert_eq!(
            Scenario::parse("\nparams.zz = 1").unwrap_err(),
            ConfigError::UnknownKey { line: 2, key: "params.zz".into() }
        );
        assert_eq!(Scenario::parse("just words").unwrap_err(), ConfigError::Syntax { line: 1 });
        assert!(matches!(
            Scenario::parse("params.n = four").unwrap_err(),
            ConfigError::BadValue { line: 1, .. }
        ));
    }

    #[test]
    fn adversary_bound() {
        let err = Scenario::parse("adversary.p1 = byz-random\nadversary.p2 = byz-random\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref lines, .. } if *lines == vec![1, 2]));
    }

    #[test]
    fn canonical_text_roundtrips() {
        let text = "scenario.mode = integrated\nadversary.p3 = mute-after:500\ntransient.at_step = 0\n\
                    transient.scope = brb,channels\ntransient.instances = 1\nrun.seeds = 3..6\nnode.fifo = true\n";
        let s = Scenario::parse(text).unwrap();
        assert_eq!(s.seeds, vec![3, 4, 5]);
        assert_eq!(Scenario::parse(&s.to_string()).unwrap(), s);
        for m in Mode::ALL {
            let s = Scenario::with_mode(m);
            assert_eq!(Scenario::parse(&s.to_string()).unwrap(), s);
        }
    }

    #[test]
    fn run_then_replay_gives_same_reports() {
        let mut s = Scenario::with_mode(Mode::Integrated);
        s.world.network.horizon = 3000;
        let trace = s.simulate(7);
        let reports = s.check(&trace);
        let (s2, _, again) = replay(&trace.render()).unwrap();
        assert_eq!(s2, s);
        assert_eq!(reports, again);
    }
}
